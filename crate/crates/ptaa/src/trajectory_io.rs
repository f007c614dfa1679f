//! Binary trajectory persistence.
//!
//! Layout: magic `PTAA`, format version (u32), `T` and `d` (u32), schedule
//! fingerprint (u64, hash of `(T, betas, eta)`), seed (u64), then
//! `(T+1) * d` little-endian f64 for `x_0..x_T` followed by the same for
//! `xi_0..xi_T`. Round trips are bitwise lossless.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::schedule::CoefficientTable;
use crate::system::TrajectoryState;

pub const MAGIC: [u8; 4] = *b"PTAA";
pub const FORMAT_VERSION: u32 = 1;

/// Raw contents of a trajectory file.
#[derive(Debug, Clone)]
pub struct TrajectoryFile {
    pub version: u32,
    pub steps: u32,
    pub dim: u32,
    pub fingerprint: u64,
    pub seed: u64,
    pub x: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
}

fn file_err(field: &str, message: impl Into<String>) -> Error {
    Error::TrajectoryFile {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Serializes a state together with the schedule fingerprint and run seed.
pub fn save_trajectory(
    state: &TrajectoryState,
    coeffs: &CoefficientTable,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let steps = state.steps();
    let dim = state.dim();
    let mut bytes = Vec::with_capacity(4 + 4 + 4 + 4 + 8 + 8 + 2 * (steps + 1) * dim * 8);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(steps as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    bytes.extend_from_slice(&coeffs.fingerprint().to_le_bytes());
    bytes.extend_from_slice(&seed.to_le_bytes());
    for t in 0..=steps {
        for &v in state.value(t) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for t in 0..=steps {
        for &v in state.noise(t) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a trajectory file, validating magic, version, and length.
pub fn read_trajectory_file(path: &Path) -> Result<TrajectoryFile> {
    let bytes = fs::read(path)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize, field: &str| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(file_err(field, "file truncated"));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };

    let magic = take(&mut cursor, 4, "magic")?;
    if magic != MAGIC {
        return Err(file_err("magic", format!("expected PTAA, got {magic:?}")));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(file_err(
            "version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let steps = u32::from_le_bytes(take(&mut cursor, 4, "steps")?.try_into().unwrap());
    let dim = u32::from_le_bytes(take(&mut cursor, 4, "dim")?.try_into().unwrap());
    if steps == 0 || dim == 0 {
        return Err(file_err("steps", "steps and dim must be nonzero"));
    }
    let fingerprint = u64::from_le_bytes(take(&mut cursor, 8, "fingerprint")?.try_into().unwrap());
    let seed = u64::from_le_bytes(take(&mut cursor, 8, "seed")?.try_into().unwrap());

    let mut read_block = |field: &str| -> Result<Vec<Vec<f64>>> {
        let mut block = Vec::with_capacity(steps as usize + 1);
        for _ in 0..=steps {
            let mut row = Vec::with_capacity(dim as usize);
            for _ in 0..dim {
                let raw = take(&mut cursor, 8, field)?;
                row.push(f64::from_le_bytes(raw.try_into().unwrap()));
            }
            block.push(row);
        }
        Ok(block)
    };
    let x = read_block("x")?;
    let xi = read_block("xi")?;
    if cursor != bytes.len() {
        return Err(file_err(
            "length",
            format!("{} trailing bytes", bytes.len() - cursor),
        ));
    }
    Ok(TrajectoryFile {
        version,
        steps,
        dim,
        fingerprint,
        seed,
        x,
        xi,
    })
}

/// Loads a trajectory for initialization against a specific coefficient
/// table; any mismatch of steps, dimension, or schedule fingerprint is a
/// hard error.
pub fn load_trajectory(path: &Path, coeffs: &CoefficientTable) -> Result<(TrajectoryState, u64)> {
    let file = read_trajectory_file(path)?;
    if file.steps as usize != coeffs.steps() {
        return Err(file_err(
            "steps",
            format!("file has T={}, table has T={}", file.steps, coeffs.steps()),
        ));
    }
    if file.dim as usize != coeffs.dim() {
        return Err(file_err(
            "dim",
            format!("file has d={}, table has d={}", file.dim, coeffs.dim()),
        ));
    }
    if file.fingerprint != coeffs.fingerprint() {
        return Err(file_err(
            "fingerprint",
            format!(
                "file schedule {:#018x} does not match configured schedule {:#018x}",
                file.fingerprint,
                coeffs.fingerprint()
            ),
        ));
    }
    let seed = file.seed;
    let state = TrajectoryState::from_parts(file.x, file.xi)?;
    Ok((state, seed))
}
