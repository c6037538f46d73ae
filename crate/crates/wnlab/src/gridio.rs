//! File formats for grid functions: a coordinates+value CSV and a compact
//! little-endian binary dump.
//!
//! Binary layout: magic `WNGF`, then the header (d: u32, b: f64,
//! n: u64) and the values in row-major axis order as little-endian f64.

use std::io::{self, Read, Write};

use wnlab_core::grid::{Grid, GridFunction};

const MAGIC: &[u8; 4] = b"WNGF";

/// Write one row per grid point: coordinates..., value.
pub fn write_csv<W: Write>(mut w: W, f: &GridFunction) -> io::Result<()> {
    let grid = f.grid();
    let d = grid.dim();
    for axis in 0..d {
        write!(w, "x{},", axis + 1)?;
    }
    writeln!(w, "value")?;
    for (flat, v) in f.values().iter().enumerate() {
        let point = grid.point(flat);
        for x in point.iter().take(d) {
            write!(w, "{x},")?;
        }
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Binary dump: header (d, b, n) then values, all little-endian.
pub fn write_binary<W: Write>(mut w: W, f: &GridFunction) -> io::Result<()> {
    let grid = f.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&grid.half_width().to_le_bytes())?;
    w.write_all(&(grid.points_per_axis() as u64).to_le_bytes())?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a binary dump written by [`write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> io::Result<GridFunction> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut u32buf)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut f64buf)?;
    let b = f64::from_le_bytes(f64buf);
    r.read_exact(&mut u64buf)?;
    let n = u64::from_le_bytes(u64buf) as usize;
    let grid = Grid::new(d, b, n)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut f64buf)?;
        values.push(f64::from_le_bytes(f64buf));
    }
    GridFunction::from_values(grid, values)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}
