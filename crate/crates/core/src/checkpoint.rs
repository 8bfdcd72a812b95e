//! Versioned binary checkpoints of a [`Population`].
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                |
//! |-------|----------------------------------------|
//! | 8     | magic `MFUQCKPT`                       |
//! | 4     | format version (`u32`)                 |
//! | 8     | payload length (`u64`)                 |
//! | n     | bincode-encoded population             |
//! | 32    | SHA-256 of the payload                 |
//!
//! Floats are stored bit-exactly, so save → load → save is byte-identical.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::smc::Population;

pub const MAGIC: &[u8; 8] = b"MFUQCKPT";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

pub fn save(population: &Population) -> Result<Vec<u8>> {
    let payload = bincode::serialize(population).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(HEADER + payload.len() + DIGEST);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    Ok(out)
}

pub fn load(bytes: &[u8]) -> Result<Population> {
    if bytes.len() < HEADER + DIGEST {
        return Err(Error::CorruptCheckpoint("stream too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version, expected: VERSION });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let expected = (HEADER as u64).checked_add(len).and_then(|v| v.checked_add(DIGEST as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::CorruptCheckpoint(format!(
            "length field {len} does not match stream of {} bytes",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER..HEADER + len as usize];
    if Sha256::digest(payload).as_slice() != &bytes[HEADER + len as usize..] {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    let population: Population =
        bincode::deserialize(payload).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    population.check_caches(1e-9)?;
    Ok(population)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hyperparameters, Rescale};
    use crate::rjmcmc::MoveConfig;
    use crate::smc::SmcConfig;

    fn population() -> Population {
        let config = SmcConfig { n_particles: 30, n_sweeps: 1, ..SmcConfig::default() };
        let rescale = Rescale { min: vec![0.0], max: vec![2.0] };
        let mut pop = Population::new(Hyperparameters::with_dim(1), MoveConfig::default(), config, rescale, 7).unwrap();
        pop.assimilate(&[0.4], 1.0).unwrap();
        pop.assimilate(&[1.5], -0.5).unwrap();
        pop
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let pop = population();
        let bytes = save(&pop).unwrap();
        let back = load(&bytes).unwrap();
        assert_eq!(back, pop);
        assert_eq!(save(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_damaged_streams() {
        let bytes = save(&population()).unwrap();
        assert!(matches!(load(&bytes[..bytes.len() - 1]), Err(Error::CorruptCheckpoint(_))));
        assert!(matches!(load(&bytes[..10]), Err(Error::CorruptCheckpoint(_))));
        let mut flipped = bytes.clone();
        flipped[HEADER + 5] ^= 0x40;
        assert!(matches!(load(&flipped), Err(Error::CorruptCheckpoint(_))));
        let mut versioned = bytes.clone();
        versioned[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert_eq!(load(&versioned).unwrap_err(), Error::VersionMismatch { found: 99, expected: VERSION });
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let mut straight = population();
        let mut resumed = load(&save(&population()).unwrap()).unwrap();
        for (x, y) in [(0.1, 0.3), (1.9, 0.8)] {
            straight.assimilate(&[x], y).unwrap();
            resumed.assimilate(&[x], y).unwrap();
        }
        assert_eq!(save(&straight).unwrap(), save(&resumed).unwrap());
    }
}
