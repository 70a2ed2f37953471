//! Binary model checkpoint.
//!
//! Layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `UNTG` | 4 bytes |
//! | format version | u32 |
//! | embed_dim, hidden_dim, vocab_size, max_len, epochs, negatives_per_sample, batch_size | u32 each |
//! | seed | u64 |
//! | learning_rate | f64 |
//! | token embedding `vocab_size x embed_dim` | f32 row-major |
//! | input weights `4*hidden x embed_dim` | f32 row-major |
//! | recurrent weights `4*hidden x hidden` | f32 row-major |
//! | gate biases `4*hidden` | f32 |
//! | output projection `hidden x embed_dim` | f32 row-major |
//!
//! Gate blocks are stacked input, forget, candidate, output.

use std::io::{Read, Write};

use super::{EmbedError, EncoderConfig, EncoderParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UNTG";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(
    mut out: W,
    config: &EncoderConfig,
    params: &EncoderParams,
) -> Result<(), EmbedError> {
    if params.embed_dim != config.embed_dim
        || params.hidden_dim != config.hidden_dim
        || params.vocab_size != config.vocab_size
    {
        return Err(EmbedError::Checkpoint("params do not match config shape".into()));
    }
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [
        config.embed_dim,
        config.hidden_dim,
        config.vocab_size,
        config.max_len,
        config.epochs,
        config.negatives_per_sample,
        config.batch_size,
    ] {
        let v = u32::try_from(v).map_err(|_| EmbedError::Checkpoint("dimension exceeds u32".into()))?;
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&config.seed.to_le_bytes())?;
    out.write_all(&config.learning_rate.to_le_bytes())?;
    let mut buf = Vec::new();
    for block in params.blocks() {
        buf.clear();
        buf.extend(block.iter().flat_map(|&w| (w as f32).to_le_bytes()));
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EmbedError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(EncoderConfig, EncoderParams), EmbedError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(EmbedError::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(EmbedError::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = read_u32(&mut input)? as usize;
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    input.read_exact(&mut b8)?;
    let learning_rate = f64::from_le_bytes(b8);
    let config = EncoderConfig {
        embed_dim: dims[0],
        hidden_dim: dims[1],
        vocab_size: dims[2],
        max_len: dims[3],
        epochs: dims[4],
        negatives_per_sample: dims[5],
        batch_size: dims[6],
        seed,
        learning_rate,
    };
    config
        .validate()
        .map_err(|e| EmbedError::Checkpoint(format!("invalid header: {e}")))?;
    let mut params = EncoderParams::zeros(config.vocab_size, config.embed_dim, config.hidden_dim);
    for block in params.blocks_mut() {
        let mut raw = vec![0u8; block.len() * 4];
        input.read_exact(&mut raw)?;
        for (w, chunk) in block.iter_mut().zip(raw.chunks_exact(4)) {
            *w = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(EmbedError::Checkpoint("trailing bytes after parameter blocks".into()));
    }
    if !params.is_finite() {
        return Err(EmbedError::Checkpoint("non-finite parameter".into()));
    }
    Ok((config, params))
}
