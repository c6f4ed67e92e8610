//! Text frontend: phoneme inventories, lexicon-based G2P with character
//! fallback, and sinusoidal positional encodings.

mod frontend;
mod positional;

pub use frontend::{
    build_inventory, text_to_phonemes, Lexicon, PhonemeInventory, PhonemeSequence, PAD_ID,
    PAD_SYMBOL, UNK_ID, UNK_SYMBOL,
};
pub use positional::{positional_encoding, positional_encoding_stacked};
