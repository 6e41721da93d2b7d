//! Binary snapshot format for staggered fields.
//!
//! Layout: magic `"BBTFLD1\0"`, header (u32 LE `nx`, `ny`; f64 LE `hx`, `hy`),
//! then `u` faces row-major f64 LE ((nx+1) * ny values), then `v` faces
//! row-major f64 LE (nx * (ny+1) values). Round trips are bit-exact.

use crate::error::{Error, Result};
use crate::field::StaggeredField;
use crate::grid::Grid;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"BBTFLD1\0";

pub fn write_field(path: impl AsRef<Path>, f: &StaggeredField) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * (f.u.len() + f.v.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(f.grid.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(f.grid.ny as u32).to_le_bytes());
    buf.extend_from_slice(&f.grid.hx.to_le_bytes());
    buf.extend_from_slice(&f.grid.hy.to_le_bytes());
    for x in f.u.iter().chain(f.v.iter()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Read a snapshot. The restored grid carries a placeholder time partition
/// (`t_final = 1`, `nt = 1`); snapshots carry no time metadata.
pub fn read_field(path: impl AsRef<Path>) -> Result<StaggeredField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 {
        return Err(Error::Format("file shorter than header".into()));
    }
    if &bytes[0..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let nx = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let ny = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let hx = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let hy = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    if nx < 4 || ny < 4 || !hx.is_finite() || !hy.is_finite() || hx <= 0.0 || hy <= 0.0 {
        return Err(Error::Format(format!("implausible header: {nx}x{ny}, h = ({hx}, {hy})")));
    }
    let n_u = (nx + 1) * ny;
    let n_v = nx * (ny + 1);
    let expected = 32 + 8 * (n_u + n_v);
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match header dimensions (expected {expected})",
            bytes.len()
        )));
    }
    let mut vals = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let u: Vec<f64> = vals.by_ref().take(n_u).collect();
    let v: Vec<f64> = vals.collect();
    let grid = Grid {
        nx,
        ny,
        hx,
        hy,
        t_final: 1.0,
        nt: 1,
    };
    StaggeredField::from_raw(&grid, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(9, 7, 1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = StaggeredField::random(&g, &mut rng, 2.0);
        let dir = std::env::temp_dir().join("bbtrack_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.fld");
        write_field(&path, &f).unwrap();
        let f2 = read_field(&path).unwrap();
        assert_eq!(f.u, f2.u);
        assert_eq!(f.v, f2.v);
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let dir = std::env::temp_dir().join("bbtrack_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.fld");
        std::fs::write(&path, b"NOTMAGIC0000000000000000000000000000").unwrap();
        assert!(matches!(read_field(&path), Err(Error::Format(_))));

        let g = Grid::new(6, 6, 1.0, 1).unwrap();
        let f = StaggeredField::zeros(&g);
        let path2 = dir.join("trunc.fld");
        write_field(&path2, &f).unwrap();
        let bytes = std::fs::read(&path2).unwrap();
        std::fs::write(&path2, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_field(&path2), Err(Error::Format(_))));
    }
}
