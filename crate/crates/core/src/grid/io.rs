//! Flat dumps of grid data.
//!
//! Binary layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `HOMOGRD1` |
//! | 4 | kind: `u32` (0 cell scalar, 1 coefficient tensor, 2 face field) |
//! | 4 | dimension `d`: `u32` |
//! | 24 | shape: three `u64` (unused axes are 1) |
//! | 8 | spacing `h`: `f64` |
//! | 24 | lower box corner: three `f64` (unused axes are 0) |
//! | 8 | payload length in `f64` words: `u64` |
//! | … | payload: `f64` words |
//!
//! Payloads: kind 0 holds one value per cell in row-major order; kind 1
//! holds `d·d` entries per cell (row-major tensor, cells row-major); kind 2
//! holds the `d` face arrays one after another, each row-major over its face
//! shape (`n_i + 1` along its own axis).

use std::io::{Read, Write};

use super::{CoefficientField, FaceField, Grid, GridFunction};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HOMOGRD1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum DumpKind {
    Cell = 0,
    Tensor = 1,
    Face = 2,
}

fn write_header(w: &mut impl Write, kind: DumpKind, grid: &Grid, words: usize) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(kind as u32).to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for n in grid.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&grid.spacing().to_le_bytes())?;
    for x in grid.lower() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&(words as u64).to_le_bytes())?;
    Ok(())
}

fn write_words(w: &mut impl Write, words: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * 4096);
    for x in words {
        buf.extend_from_slice(&x.to_le_bytes());
        if buf.len() >= 8 * 4096 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Reads any dump, returning its kind, grid and raw payload.
pub fn read_dump(r: &mut impl Read) -> Result<(DumpKind, Grid, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let kind = match read_u32(r)? {
        0 => DumpKind::Cell,
        1 => DumpKind::Tensor,
        2 => DumpKind::Face,
        k => return Err(Error::Format(format!("unknown dump kind {k}"))),
    };
    let dim = read_u32(r)? as usize;
    let mut shape = [0usize; 3];
    for s in shape.iter_mut() {
        *s = read_u64(r)? as usize;
    }
    let spacing = read_f64(r)?;
    let mut lower = [0.0; 3];
    for x in lower.iter_mut() {
        *x = read_f64(r)?;
    }
    let grid = Grid::from_parts(dim, shape, spacing, lower)?;
    let words = read_u64(r)? as usize;
    let expected = match kind {
        DumpKind::Cell => grid.len(),
        DumpKind::Tensor => grid.len() * dim * dim,
        DumpKind::Face => (0..dim).map(|a| grid.face_len(a)).sum(),
    };
    if words != expected {
        return Err(Error::Format(format!("payload has {words} words, expected {expected}")));
    }
    let mut bytes = vec![0u8; 8 * words];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((kind, grid, data))
}

impl GridFunction {
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, DumpKind::Cell, &self.grid, self.values.len())?;
        write_words(w, self.values.iter().copied())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        match read_dump(r)? {
            (DumpKind::Cell, grid, values) => GridFunction::from_values(&grid, values),
            (k, _, _) => Err(Error::Format(format!("expected a cell dump, found {k:?}"))),
        }
    }

    /// CSV with `#` header lines (d, box, spacing), then `i0,…,value`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write_csv_header(w, &self.grid)?;
        let d = self.grid.dim();
        let cols: Vec<String> = (0..d).map(|i| format!("i{i}")).collect();
        writeln!(w, "{},value", cols.join(","))?;
        for (idx, v) in self.values.iter().enumerate() {
            let k = self.grid.multi_index(idx);
            let ks: Vec<String> = k[..d].iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{:e}", ks.join(","), v)?;
        }
        Ok(())
    }
}

impl FaceField {
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let words = self.axes.iter().map(|a| a.len()).sum();
        write_header(w, DumpKind::Face, &self.grid, words)?;
        write_words(w, self.axes.iter().flat_map(|a| a.iter().copied()))
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        match read_dump(r)? {
            (DumpKind::Face, grid, data) => {
                let mut axes = Vec::new();
                let mut off = 0;
                for a in 0..grid.dim() {
                    let n = grid.face_len(a);
                    axes.push(data[off..off + n].to_vec());
                    off += n;
                }
                Ok(FaceField { grid, axes })
            }
            (k, _, _) => Err(Error::Format(format!("expected a face dump, found {k:?}"))),
        }
    }

    /// CSV rows `axis,i0,…,value` over every face.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write_csv_header(w, &self.grid)?;
        let d = self.grid.dim();
        let cols: Vec<String> = (0..d).map(|i| format!("i{i}")).collect();
        writeln!(w, "axis,{},value", cols.join(","))?;
        for (axis, face) in self.axes.iter().enumerate() {
            let s = self.grid.face_shape(axis);
            for (idx, v) in face.iter().enumerate() {
                let k2 = idx % s[2];
                let rest = idx / s[2];
                let k = [rest / s[1], rest % s[1], k2];
                let ks: Vec<String> = k[..d].iter().map(|x| x.to_string()).collect();
                writeln!(w, "{axis},{},{:e}", ks.join(","), v)?;
            }
        }
        Ok(())
    }
}

impl CoefficientField {
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let d = self.dim();
        write_header(w, DumpKind::Tensor, &self.grid, self.cells.len() * d * d)?;
        write_words(w, self.cells.iter().flat_map(move |a| (0..d).flat_map(move |i| (0..d).map(move |j| a[i][j]))))
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        match read_dump(r)? {
            (DumpKind::Tensor, grid, data) => {
                let d = grid.dim();
                let cells = data
                    .chunks_exact(d * d)
                    .map(|c| {
                        let mut a = [[0.0; 3]; 3];
                        for i in 0..d {
                            for j in 0..d {
                                a[i][j] = c[i * d + j];
                            }
                        }
                        a
                    })
                    .collect();
                Ok(CoefficientField { grid, cells })
            }
            (k, _, _) => Err(Error::Format(format!("expected a tensor dump, found {k:?}"))),
        }
    }

    /// CSV rows `i0,…,a00,a01,…` with the tensor row-major.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write_csv_header(w, &self.grid)?;
        let d = self.dim();
        let mut cols: Vec<String> = (0..d).map(|i| format!("i{i}")).collect();
        for i in 0..d {
            for j in 0..d {
                cols.push(format!("a{i}{j}"));
            }
        }
        writeln!(w, "{}", cols.join(","))?;
        for (idx, a) in self.cells.iter().enumerate() {
            let k = self.grid.multi_index(idx);
            let mut row: Vec<String> = k[..d].iter().map(|x| x.to_string()).collect();
            for r in a.iter().take(d) {
                for v in r.iter().take(d) {
                    row.push(format!("{v:e}"));
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn write_csv_header(w: &mut impl Write, g: &Grid) -> Result<()> {
    let dom = g.domain();
    let d = g.dim();
    writeln!(w, "# d = {d}")?;
    writeln!(w, "# box = {:?} {:?}", &dom.lower[..d], &dom.upper[..d])?;
    writeln!(w, "# spacing = {}", g.spacing())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gradient;
    use crate::tensor;

    #[test]
    fn binary_roundtrips() {
        let g = Grid::centered(2, 2.0, 0.5).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0] * 2.0 - x[1]);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 80 + 8 * g.len());
        assert_eq!(GridFunction::read_binary(&mut buf.as_slice()).unwrap(), u);

        let f = gradient(&u);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(FaceField::read_binary(&mut buf.as_slice()).unwrap(), f);

        let a = CoefficientField::from_fn(&g, |x| tensor::scaled_identity(2, if x[0] > 0.0 { 1.0 } else { 0.5 }));
        let mut buf = Vec::new();
        a.write_binary(&mut buf).unwrap();
        assert_eq!(CoefficientField::read_binary(&mut buf.as_slice()).unwrap(), a);
        assert!(GridFunction::read_binary(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = Grid::centered(1, 1.0, 0.5).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0]);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# d = 1");
        assert_eq!(lines[3], "i0,value");
        assert_eq!(lines.len(), 4 + g.len());
    }
}
