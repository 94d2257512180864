//! On-disk formats.
//!
//! `CSCF` field files hold named real fields on the full space grid. Layout,
//! little endian: magic, u32 version, u64 n1, u64 nn, f64 extent, f64 X,
//! u32 field count, then per field a 16-byte name and n1·nn f64 samples.
//!
//! `CSTR` trajectory files: magic, u32 version, u64 n1, u64 nn, f64 extent,
//! f64 X, f64 Δt, u64 snapshot count, then per snapshot f64 t followed by u⁺
//! and u⁻ as interleaved (re, im) pairs.
//!
//! Neumann traces go to CSV with columns
//! `boundary_node,x_n,t,re_plus,im_plus,re_minus,im_minus`. Floats are written
//! in shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;
use crate::solver::trace::NeumannTrace;
use crate::solver::TwoStateField;

const FIELD_MAGIC: &[u8; 4] = b"CSCF";
const TRAJECTORY_MAGIC: &[u8; 4] = b"CSTR";
const VERSION: u32 = 1;
const NAME_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub n1: usize,
    pub nn: usize,
    pub extent: f64,
    pub half_length: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl FieldFile {
    pub fn new(grid: &WaveguideGrid) -> Self {
        FieldFile {
            n1: grid.n1(),
            nn: grid.nn(),
            extent: grid.cross_section.extent,
            half_length: grid.half_length,
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        if name.len() > NAME_LEN {
            return Err(Error::InvalidParameter {
                name: "field name",
                message: format!("`{name}` is longer than {NAME_LEN} bytes"),
            });
        }
        if data.len() != self.n1 * self.nn {
            return Err(Error::ShapeMismatch {
                expected: self.n1 * self.nn,
                got: data.len(),
            });
        }
        self.fields.push((name.to_string(), data));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, d)| d.as_slice())
    }

    pub fn from_coefficients(c: &CoefficientSet, grid: &WaveguideGrid) -> Result<Self> {
        c.check_shape(grid)?;
        let mut f = FieldFile::new(grid);
        for (k, a) in c.a.iter().enumerate() {
            f.push(&format!("a{}", k + 1), a.clone())?;
        }
        f.push("p", c.p.clone())?;
        f.push("q_plus", c.q_plus.clone())?;
        f.push("q_minus", c.q_minus.clone())?;
        Ok(f)
    }

    pub fn to_coefficients(&self) -> Option<CoefficientSet> {
        let mut a = Vec::new();
        while let Some(d) = self.get(&format!("a{}", a.len() + 1)) {
            a.push(d.to_vec());
        }
        Some(CoefficientSet {
            n1: self.n1,
            nn: self.nn,
            a,
            p: self.get("p")?.to_vec(),
            q_plus: self.get("q_plus")?.to_vec(),
            q_minus: self.get("q_minus")?.to_vec(),
        })
    }

    /// Real and imaginary parts of both states as four fields.
    pub fn from_state(field: &TwoStateField, grid: &WaveguideGrid) -> Result<Self> {
        field.check(grid)?;
        let mut f = FieldFile::new(grid);
        for (tag, u) in [("plus", &field.u_plus), ("minus", &field.u_minus)] {
            f.push(&format!("re_{tag}"), u.iter().map(|z| z.re).collect())?;
            f.push(&format!("im_{tag}"), u.iter().map(|z| z.im).collect())?;
        }
        Ok(f)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(FIELD_MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.n1 as u64).to_le_bytes());
        buf.extend_from_slice(&(self.nn as u64).to_le_bytes());
        buf.extend_from_slice(&self.extent.to_le_bytes());
        buf.extend_from_slice(&self.half_length.to_le_bytes());
        buf.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        w.write_all(&buf).map_err(io)?;
        for (name, data) in &self.fields {
            let mut label = [0u8; NAME_LEN];
            label[..name.len()].copy_from_slice(name.as_bytes());
            w.write_all(&label).map_err(io)?;
            write_f64s(&mut w, data).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut rd = Reader { r: &mut r, path };
        rd.magic(FIELD_MAGIC)?;
        let n1 = rd.u64()? as usize;
        let nn = rd.u64()? as usize;
        let extent = rd.f64()?;
        let half_length = rd.f64()?;
        let count = rd.u32()? as usize;
        let len = n1.checked_mul(nn).ok_or_else(|| rd.bad("grid size overflows"))?;
        let mut fields = Vec::with_capacity(count);
        for _ in 0..count {
            let mut label = [0u8; NAME_LEN];
            rd.exact(&mut label)?;
            let end = label.iter().position(|&b| b == 0).unwrap_or(NAME_LEN);
            let name = std::str::from_utf8(&label[..end]).map_err(|_| rd.bad("field name is not UTF-8"))?.to_string();
            fields.push((name, rd.f64s(len)?));
        }
        let mut tail = [0u8; 1];
        if rd.r.read(&mut tail).map_err(io)? != 0 {
            return Err(rd.bad("trailing bytes after the last field"));
        }
        Ok(FieldFile {
            n1,
            nn,
            extent,
            half_length,
            fields,
        })
    }
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> std::io::Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_complex(w: &mut impl Write, data: &[Complex64]) -> std::io::Result<()> {
    for z in data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<'a, R> {
    r: &'a mut R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bad(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: message.to_string(),
        }
    }

    fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                self.bad("unexpected end of file")
            } else {
                Error::io(self.path, e)
            }
        })
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut m = [0u8; 4];
        self.exact(&mut m)?;
        if &m != expected {
            return Err(self.bad("bad magic"));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(self.bad(&format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn complex(&mut self, n: usize) -> Result<Vec<Complex64>> {
        (0..n).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect()
    }
}

/// Streams snapshots to a `CSTR` file; the count is patched in on `finish`.
pub struct TrajectoryWriter {
    w: BufWriter<File>,
    path: PathBuf,
    len: usize,
    count: u64,
    count_offset: u64,
}

impl TrajectoryWriter {
    pub fn create(path: &Path, grid: &WaveguideGrid, dt: f64) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(TRAJECTORY_MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(grid.n1() as u64).to_le_bytes());
        buf.extend_from_slice(&(grid.nn() as u64).to_le_bytes());
        buf.extend_from_slice(&grid.cross_section.extent.to_le_bytes());
        buf.extend_from_slice(&grid.half_length.to_le_bytes());
        buf.extend_from_slice(&dt.to_le_bytes());
        let count_offset = buf.len() as u64;
        buf.extend_from_slice(&0u64.to_le_bytes());
        w.write_all(&buf).map_err(io)?;
        Ok(TrajectoryWriter {
            w,
            path: path.to_path_buf(),
            len: grid.len(),
            count: 0,
            count_offset,
        })
    }

    pub fn push(&mut self, t: f64, field: &TwoStateField) -> Result<()> {
        if field.u_plus.len() != self.len || field.u_minus.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: self.len,
                got: field.u_plus.len().min(field.u_minus.len()),
            });
        }
        let path = &self.path;
        let io = |e| Error::io(path, e);
        self.w.write_all(&t.to_le_bytes()).map_err(io)?;
        write_complex(&mut self.w, &field.u_plus).map_err(io)?;
        write_complex(&mut self.w, &field.u_minus).map_err(io)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        let path = self.path.clone();
        let io = |e| Error::io(&path, e);
        self.w.flush().map_err(io)?;
        let f = self.w.get_mut();
        f.seek(SeekFrom::Start(self.count_offset)).map_err(io)?;
        f.write_all(&self.count.to_le_bytes()).map_err(io)?;
        f.flush().map_err(io)?;
        Ok(self.count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub n1: usize,
    pub nn: usize,
    pub extent: f64,
    pub half_length: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<TwoStateField>,
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut rd = Reader { r: &mut r, path };
    rd.magic(TRAJECTORY_MAGIC)?;
    let n1 = rd.u64()? as usize;
    let nn = rd.u64()? as usize;
    let extent = rd.f64()?;
    let half_length = rd.f64()?;
    let dt = rd.f64()?;
    let count = rd.u64()? as usize;
    let len = n1.checked_mul(nn).ok_or_else(|| rd.bad("grid size overflows"))?;
    let mut times = Vec::with_capacity(count);
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        times.push(rd.f64()?);
        let u_plus = rd.complex(len)?;
        let u_minus = rd.complex(len)?;
        snapshots.push(TwoStateField { u_plus, u_minus });
    }
    Ok(TrajectoryFile {
        n1,
        nn,
        extent,
        half_length,
        dt,
        times,
        snapshots,
    })
}

pub const NEUMANN_HEADER: &str = "boundary_node,x_n,t,re_plus,im_plus,re_minus,im_minus";

pub fn write_neumann_csv(path: &Path, trace: &NeumannTrace, grid: &WaveguideGrid) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{NEUMANN_HEADER}").map_err(io)?;
    let (plus, minus) = (&trace.plus, &trace.minus);
    for (b, &node) in plus.nodes.iter().enumerate() {
        for (m, &t) in plus.times.iter().enumerate() {
            for j in 0..grid.nn() {
                let (zp, zm) = (plus.values[b][m][j], minus.values[b][m][j]);
                writeln!(w, "{node},{},{t},{},{},{},{}", grid.xn(j), zp.re, zp.im, zm.re, zm.im).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// One parsed row of a Neumann CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannRow {
    pub boundary_node: usize,
    pub x_n: f64,
    pub t: f64,
    pub plus: Complex64,
    pub minus: Complex64,
}

pub fn read_neumann_csv(path: &Path) -> Result<Vec<NeumannRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: &str| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut rows = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if k == 0 {
            if line.trim() != NEUMANN_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(bad(k + 1, "expected 7 columns"));
        }
        let f = |c: &str| c.parse::<f64>().map_err(|_| bad(k + 1, "bad number"));
        rows.push(NeumannRow {
            boundary_node: cols[0].parse().map_err(|_| bad(k + 1, "bad node index"))?,
            x_n: f(cols[1])?,
            t: f(cols[2])?,
            plus: Complex64::new(f(cols[3])?, f(cols[4])?),
            minus: Complex64::new(f(cols[5])?, f(cols[6])?),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CrossSection;

    fn grid() -> WaveguideGrid {
        WaveguideGrid::new(CrossSection::interval(1.0, 5).unwrap(), 2.0, 7, 1.0, 4).unwrap()
    }

    #[test]
    fn coefficient_round_trip_is_bitwise() {
        let g = grid();
        let mut c = CoefficientSet::zeros(&g);
        c.p = g.sample(|x1, xn| (x1 * 3.1).sin() * xn.exp() / 7.0);
        c.q_minus.iter_mut().for_each(|v| *v = -0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        FieldFile::from_coefficients(&c, &g).unwrap().write(&path).unwrap();
        let back = FieldFile::read(&path).unwrap();
        assert_eq!(back.to_coefficients().unwrap(), c);
        assert_eq!(back.half_length, 2.0);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        FieldFile::from_coefficients(&CoefficientSet::zeros(&g), &g).unwrap().write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(FieldFile::read(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"XXXX").unwrap();
        assert!(matches!(FieldFile::read(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn trajectory_round_trip() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut w = TrajectoryWriter::create(&path, &g, 0.25).unwrap();
        let snaps: Vec<TwoStateField> = (0..3)
            .map(|m| {
                let u: Vec<Complex64> = (0..g.len()).map(|k| Complex64::new(k as f64 * 0.1, m as f64 / 3.0)).collect();
                TwoStateField {
                    u_minus: u.iter().map(|z| z.conj()).collect(),
                    u_plus: u,
                }
            })
            .collect();
        for (m, s) in snaps.iter().enumerate() {
            w.push(m as f64 * 0.25, s).unwrap();
        }
        assert_eq!(w.finish().unwrap(), 3);
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.snapshots, snaps);
        assert_eq!(back.times, vec![0.0, 0.25, 0.5]);
        assert_eq!(back.dt, 0.25);
    }

    #[test]
    fn neumann_csv_round_trip_is_exact() {
        let g = grid();
        let gamma = crate::grid::SubBoundary::new(&g.cross_section, vec![0]).unwrap();
        let mut trace = NeumannTrace::new(&gamma);
        let u: Vec<Complex64> = (0..g.len()).map(|k| Complex64::new((k as f64).sqrt() / 3.0, 1.0 / (k as f64 + 7.0))).collect();
        trace.record(&g, 0.0, &u, &u);
        trace.record(&g, 0.1, &u, &u);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.csv");
        write_neumann_csv(&path, &trace, &g).unwrap();
        let rows = read_neumann_csv(&path).unwrap();
        assert_eq!(rows.len(), 2 * g.nn());
        for r in &rows {
            let m = if r.t == 0.0 { 0 } else { 1 };
            let j = ((r.x_n + g.half_length) / g.hn()).round() as usize;
            assert_eq!(r.plus, trace.plus.values[0][m][j]);
            assert_eq!(r.minus, trace.minus.values[0][m][j]);
        }
    }
}
