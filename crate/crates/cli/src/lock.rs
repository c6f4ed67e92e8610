use std::path::{Path, PathBuf};

use crate::CmdError;

/// Exclusive ownership of a run directory via a lockfile; removed on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock, CmdError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CmdError::input(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CmdError::input(
                format!(
                    "{} is owned by another run (lockfile {} exists)",
                    dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(CmdError::input(format!(
                "cannot create lockfile {}: {e}",
                path.display()
            ))),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        assert!(RunLock::acquire(dir.path()).is_err());
        drop(lock);
        let again = RunLock::acquire(dir.path()).unwrap();
        drop(again);
    }
}
