//! Binary field and propagator files, coefficient manifests.
//!
//! GOF1: one JSON header line, then interleaved little-endian `f64` pairs
//! `(re, im)` in time-major, space row-major order. Spatial fields use the
//! same header with `"Nt": 1`. GOP1 stores a dense propagator row-major.

use crate::error::{Error, Result};
use crate::green::{PropagatorKind, PropagatorMatrix};
use crate::lattice::{Field, SpaceTimeGrid, SpatialField};
use crate::operator::{CoefficientField, CoefficientSet};
use crate::solver::Direction;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Grid parameters as they appear in manifests and file headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "Lt")]
    pub lt: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.n, self.nx, self.lx, self.nt, self.lt)
    }
}

impl From<&SpaceTimeGrid> for GridSpec {
    fn from(g: &SpaceTimeGrid) -> Self {
        Self { n: g.n, nx: g.nx, lx: g.lx, nt: g.nt, lt: g.lt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub magic: String,
    pub n: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Lt")]
    pub lt: f64,
    pub layout: String,
    pub scalar: String,
}

const LAYOUT: &str = "t-major";
const SCALAR: &str = "complex-f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorHeader {
    pub magic: String,
    pub n: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    /// Source and target times.
    pub s: f64,
    pub t: f64,
    pub kappa: f64,
    pub flag: PropagatorKind,
    // optional extension keys so the space-time grid can be rebuilt
    #[serde(rename = "Nt", default, skip_serializing_if = "Option::is_none")]
    pub nt: Option<usize>,
    #[serde(rename = "Lt", default, skip_serializing_if = "Option::is_none")]
    pub lt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

fn write_header<W: Write, H: Serialize>(w: &mut W, h: &H) -> Result<()> {
    serde_json::to_writer(&mut *w, h)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    line.pop();
    String::from_utf8(line).map_err(|_| Error::Format("header is not UTF-8".into()))
}

fn write_samples<W: Write>(w: &mut W, data: &[C64]) -> Result<()> {
    for z in data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_samples<R: Read>(r: &mut R, count: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("payload shorter than {count} complex samples: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after payload", rest.len())));
    }
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect())
}

fn field_header(g: &SpaceTimeGrid, nt: usize) -> FieldHeader {
    FieldHeader {
        magic: "GOF1".into(),
        n: g.n,
        nx: g.nx,
        nt,
        lx: g.lx,
        lt: g.lt,
        layout: LAYOUT.into(),
        scalar: SCALAR.into(),
    }
}

pub fn write_field_to<W: Write>(w: &mut W, u: &Field) -> Result<()> {
    write_header(w, &field_header(u.grid(), u.grid().nt))?;
    write_samples(w, u.data())
}

pub fn write_spatial_to<W: Write>(w: &mut W, psi: &SpatialField) -> Result<()> {
    write_header(w, &field_header(psi.grid(), 1))?;
    write_samples(w, psi.data())
}

fn parse_field_header(line: &str) -> Result<FieldHeader> {
    let h: FieldHeader = serde_json::from_str(line).map_err(|e| Error::Format(format!("bad GOF1 header: {e}")))?;
    if h.magic != "GOF1" {
        return Err(Error::Format(format!("magic {:?}, expected GOF1", h.magic)));
    }
    if h.layout != LAYOUT || h.scalar != SCALAR {
        return Err(Error::Format(format!("unsupported layout {:?} / scalar {:?}", h.layout, h.scalar)));
    }
    Ok(h)
}

/// Either kind of GOF1 payload.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyField {
    SpaceTime(Field),
    /// Samples of a spatial field with its header; the grid needs `Nt ≥ 8`, so
    /// attaching one is left to [`AnyField::into_spatial`].
    Spatial(FieldHeader, Vec<C64>),
}

impl AnyField {
    /// Spatial field on `grid`; the header must agree in `n`, `Nx`, `Lx`.
    pub fn into_spatial(self, grid: &SpaceTimeGrid) -> Result<SpatialField> {
        match self {
            AnyField::Spatial(h, data) => {
                if h.n != grid.n || h.nx != grid.nx || h.lx != grid.lx {
                    return Err(Error::GridMismatch);
                }
                SpatialField::new(grid, data)
            }
            AnyField::SpaceTime(_) => Err(Error::Format("expected a spatial field (Nt = 1)".into())),
        }
    }

    pub fn into_field(self, grid: &SpaceTimeGrid) -> Result<Field> {
        match self {
            AnyField::SpaceTime(f) if f.grid() == grid => Ok(f),
            AnyField::SpaceTime(_) => Err(Error::GridMismatch),
            AnyField::Spatial(..) => Err(Error::Format("expected a space-time field".into())),
        }
    }
}

pub fn read_any_from<R: BufRead>(r: &mut R) -> Result<AnyField> {
    let h = parse_field_header(&read_header_line(r)?)?;
    if !(1..=3).contains(&h.n) || h.nx == 0 {
        return Err(Error::Format(format!("bad dimensions n = {}, Nx = {}", h.n, h.nx)));
    }
    let ns = h.nx.checked_pow(h.n as u32).ok_or_else(|| Error::Format("Nx^n overflows".into()))?;
    if h.nt == 1 {
        let data = read_samples(r, ns)?;
        return Ok(AnyField::Spatial(h, data));
    }
    let grid = SpaceTimeGrid::new(h.n, h.nx, h.lx, h.nt, h.lt)?;
    let data = read_samples(r, grid.len())?;
    Ok(AnyField::SpaceTime(Field::new(&grid, data)?))
}

pub fn write_field(path: &Path, u: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field_to(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn write_spatial(path: &Path, psi: &SpatialField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_spatial_to(&mut w, psi)?;
    w.flush()?;
    Ok(())
}

pub fn read_any(path: &Path) -> Result<AnyField> {
    read_any_from(&mut BufReader::new(File::open(path)?))
}

pub fn read_field(path: &Path) -> Result<Field> {
    match read_any(path)? {
        AnyField::SpaceTime(f) => Ok(f),
        AnyField::Spatial(..) => Err(Error::Format(format!("{} holds a spatial field", path.display()))),
    }
}

pub fn write_propagator_to<W: Write>(w: &mut W, m: &PropagatorMatrix) -> Result<()> {
    let g = &m.grid;
    let h = PropagatorHeader {
        magic: "GOP1".into(),
        n: g.n,
        nx: g.nx,
        lx: g.lx,
        s: m.source_time(),
        t: m.target_time(),
        kappa: m.kappa,
        flag: m.kind,
        nt: Some(g.nt),
        lt: Some(g.lt),
        direction: Some(m.direction),
    };
    write_header(w, &h)?;
    let ns = g.spatial_len();
    let rows: Vec<C64> = (0..ns).flat_map(|i| (0..ns).map(move |j| (i, j))).map(|(i, j)| m.entries[(i, j)]).collect();
    write_samples(w, &rows)
}

pub fn read_propagator_from<R: BufRead>(r: &mut R) -> Result<PropagatorMatrix> {
    let line = read_header_line(r)?;
    let h: PropagatorHeader = serde_json::from_str(&line).map_err(|e| Error::Format(format!("bad GOP1 header: {e}")))?;
    if h.magic != "GOP1" {
        return Err(Error::Format(format!("magic {:?}, expected GOP1", h.magic)));
    }
    let (nt, lt) = match (h.nt, h.lt) {
        (Some(nt), Some(lt)) => (nt, lt),
        _ => return Err(Error::Format("GOP1 header lacks Nt/Lt; the time grid cannot be rebuilt".into())),
    };
    let grid = SpaceTimeGrid::new(h.n, h.nx, h.lx, nt, lt)?;
    let ns = grid.spatial_len();
    let data = read_samples(r, ns * ns)?;
    let slice_of = |time: f64| -> Result<usize> {
        let k = (time / grid.dt()).round();
        if (k * grid.dt() - time).abs() > 1e-9 * grid.lt || k < 0.0 || k as usize >= nt {
            return Err(Error::Format(format!("time {time} is not a grid time")));
        }
        Ok(k as usize)
    };
    Ok(PropagatorMatrix {
        source: slice_of(h.s)?,
        target: slice_of(h.t)?,
        kappa: h.kappa,
        kind: h.flag,
        direction: h.direction.unwrap_or(Direction::Forward),
        entries: DMatrix::from_row_slice(ns, ns, &data),
        grid,
    })
}

pub fn write_propagator(path: &Path, m: &PropagatorMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_propagator_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_propagator(path: &Path) -> Result<PropagatorMatrix> {
    read_propagator_from(&mut BufReader::new(File::open(path)?))
}

/// `{A: [n×n paths, row-major], avec: [n paths], bvec: [n paths], a0: path}`.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientManifest {
    #[serde(rename = "A")]
    pub a: Vec<PathBuf>,
    pub avec: Vec<PathBuf>,
    pub bvec: Vec<PathBuf>,
    pub a0: PathBuf,
}

fn load_component(path: &Path, grid: &SpaceTimeGrid) -> Result<CoefficientField> {
    Ok(match read_any(path)? {
        AnyField::Spatial(h, data) => {
            if h.n != grid.n || h.nx != grid.nx || h.lx != grid.lx {
                return Err(Error::GridMismatch);
            }
            CoefficientField::Spatial(data)
        }
        AnyField::SpaceTime(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            CoefficientField::Full(f.into_data())
        }
    })
}

pub fn load_coefficients(manifest: &Path, grid: &SpaceTimeGrid) -> Result<CoefficientSet> {
    let text = std::fs::read_to_string(manifest)?;
    let m: CoefficientManifest = serde_json::from_str(&text)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let load = |p: &PathBuf| load_component(&base.join(p), grid);
    let a = m.a.iter().map(load).collect::<Result<Vec<_>>>()?;
    let avec = m.avec.iter().map(load).collect::<Result<Vec<_>>>()?;
    let bvec = m.bvec.iter().map(load).collect::<Result<Vec<_>>>()?;
    CoefficientSet::new(grid, a, avec, bvec, load(&m.a0)?)
}

/// Writes one GOF1 file per component next to `manifest` and the manifest itself.
pub fn save_coefficients(manifest: &Path, set: &CoefficientSet) -> Result<()> {
    let g = set.grid();
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("coeffs");
    let ns = g.spatial_len();
    let save = |name: String, c: &CoefficientField| -> Result<PathBuf> {
        let file = PathBuf::from(format!("{stem}_{name}.gof"));
        let path = dir.join(&file);
        match c {
            CoefficientField::Constant(z) => write_spatial(&path, &SpatialField::new(g, vec![*z; ns])?)?,
            CoefficientField::Spatial(v) => write_spatial(&path, &SpatialField::new(g, v.clone())?)?,
            CoefficientField::Full(v) => write_field(&path, &Field::new(g, v.clone())?)?,
        }
        Ok(file)
    };
    let n = g.n;
    let m = CoefficientManifest {
        a: (0..n * n).map(|e| save(format!("A{}{}", e / n, e % n), &set.a[e])).collect::<Result<_>>()?,
        avec: (0..n).map(|c| save(format!("a{c}"), &set.avec[c])).collect::<Result<_>>()?,
        bvec: (0..n).map(|c| save(format!("b{c}"), &set.bvec[c])).collect::<Result<_>>()?,
        a0: save("a0".into(), &set.a0)?,
    };
    std::fs::write(manifest, serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn gof1_round_trip_and_header_line() {
        let g = make_grid(2, 8, 3.0, 8, 2.0).unwrap();
        let u = Field::from_fn(&g, |t, x| C64::new(t + x[0], x[1] - t));
        let mut buf = Vec::new();
        write_field_to(&mut buf, &u).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let head: serde_json::Value = serde_json::from_slice(&buf[..nl]).unwrap();
        assert_eq!(head["magic"], "GOF1");
        assert_eq!(head["Nt"], 8);
        assert_eq!(buf.len() - nl - 1, g.len() * 16);
        let back = read_any_from(&mut &buf[..]).unwrap().into_field(&g).unwrap();
        assert_eq!(back, u);
        let psi = SpatialField::from_fn(&g, |x| C64::new(x[0], -x[1]));
        let mut sbuf = Vec::new();
        write_spatial_to(&mut sbuf, &psi).unwrap();
        let back = read_any_from(&mut &sbuf[..]).unwrap().into_spatial(&g).unwrap();
        assert_eq!(back, psi);
        sbuf.push(0);
        assert!(read_any_from(&mut &sbuf[..]).is_err());
        assert!(read_any_from(&mut &buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn coefficient_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(1, 8, 3.0, 8, 2.0).unwrap();
        let mut c = CoefficientSet::identity(&g);
        c.a0 = CoefficientField::Full((0..g.len()).map(|i| C64::new(i as f64, 0.5)).collect());
        c.bvec[0] = CoefficientField::Spatial((0..8).map(|i| C64::new(0.0, i as f64)).collect());
        let path = dir.path().join("coeffs.json");
        save_coefficients(&path, &c).unwrap();
        let back = load_coefficients(&path, &g).unwrap();
        assert_eq!(back.a0, c.a0);
        assert_eq!(back.bvec, c.bvec);
        assert_eq!(back.a[0], CoefficientField::Spatial(vec![C64::new(1.0, 0.0); 8]));
        let other = make_grid(1, 16, 3.0, 8, 2.0).unwrap();
        assert!(load_coefficients(&path, &other).is_err());
    }

    #[test]
    fn gop1_round_trip() {
        let g = make_grid(1, 8, 4.0, 16, 4.0).unwrap();
        let cfg = crate::solver::SolverConfig::new(1.0, 0.5, 1e-8).with_mode(crate::operator::NormMode::Inhomogeneous);
        let m = crate::green::propagator(&CoefficientSet::identity(&g), &cfg, 2, 6, PropagatorKind::Fundamental).unwrap();
        let mut buf = Vec::new();
        write_propagator_to(&mut buf, &m).unwrap();
        let back = read_propagator_from(&mut &buf[..]).unwrap();
        assert_eq!((back.source, back.target, back.kind, back.direction), (2, 6, m.kind, m.direction));
        assert_eq!(back.entries, m.entries);
        let bare = br#"{"magic":"GOP1","n":1,"Nx":8,"Lx":4.0,"s":0.5,"t":1.5,"kappa":1.0,"flag":"green"}"#;
        let mut v = bare.to_vec();
        v.push(b'\n');
        assert!(matches!(read_propagator_from(&mut &v[..]), Err(Error::Format(_))));
    }
}
