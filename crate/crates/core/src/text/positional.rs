use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Sinusoidal positional encoding `[T, d]`:
/// `PE[t, 2i] = sin(t / 10000^(2i/d))`, `PE[t, 2i+1] = cos(...)`.
/// Added to embeddings, never concatenated.
pub fn positional_encoding<E: Element>(t: usize, d: usize) -> Result<Tensor<E>> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::InvalidDim(d));
    }
    if t == 0 {
        return Err(Error::InvalidShape("positional encoding needs T >= 1".into()));
    }
    let mut data = vec![E::zero(); t * d];
    for pos in 0..t {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = E::from_f64(angle.sin());
            data[pos * d + 2 * i + 1] = E::from_f64(angle.cos());
        }
    }
    Tensor::from_vec(data, &[t, d])
}

/// Positional encodings for several sequences stacked row-wise: positions
/// restart at 0 on every segment boundary.
pub fn positional_encoding_stacked<E: Element>(lengths: &[usize], d: usize) -> Result<Tensor<E>> {
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(Error::InvalidShape("stacked encoding needs nonempty lengths".into()));
    }
    let longest = *lengths.iter().max().unwrap();
    let table = positional_encoding::<E>(longest, d)?;
    let total: usize = lengths.iter().sum();
    let mut data = Vec::with_capacity(total * d);
    for &len in lengths {
        data.extend_from_slice(&table.data()[..len * d]);
    }
    Tensor::from_vec(data, &[total, d])
}
