//! File formats: NIfTI volumes, protocol and mesh JSON, raw complex64 k-space.
//!
//! NIfTI arrays are indexed `[x, y, z, t]`; a volume maps to [`GridData`]
//! with dims `[x, y, z]` and `t` as the measurement index. Trailing spatial
//! axes of size 1 are dropped on write.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array, IxDyn};
use nifti::{IntoNdArray, NiftiObject, NiftiType, ReaderOptions};
use nifti::writer::WriterOptions;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::volume::{unpack, GridData, Mask, MeshSpec, NeighborGraph, ParamSet, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloatType {
    F32,
    #[default]
    F64,
}

fn nifti_err(path: &Path, e: nifti::NiftiError) -> Error {
    match e {
        nifti::NiftiError::Io(io) => Error::Io(io),
        other => Error::Data(format!("{}: {other}", path.display())),
    }
}

pub fn read_nifti(path: &Path) -> Result<GridData> {
    let lower = path.to_string_lossy().to_lowercase();
    if !lower.ends_with(".nii") {
        bail!(Data, "{}: only uncompressed single-file .nii is supported", path.display());
    }
    let obj = ReaderOptions::new().read_file(path).map_err(|e| nifti_err(path, e))?;
    let dt = obj.header().data_type().map_err(|e| nifti_err(path, e))?;
    if !matches!(dt, NiftiType::Float32 | NiftiType::Float64) {
        bail!(Data, "{}: datatype {dt:?} not supported (float32/float64 only)", path.display());
    }
    let arr = obj.into_volume().into_ndarray::<f64>().map_err(|e| nifti_err(path, e))?;
    let shape = arr.shape().to_vec();
    if shape.is_empty() || shape.len() > 4 {
        bail!(Data, "{}: expected 1 to 4 dimensions, got {}", path.display(), shape.len());
    }
    let mut dims = [1usize; 3];
    dims[..shape.len().min(3)].copy_from_slice(&shape[..shape.len().min(3)]);
    let n_meas = shape.get(3).copied().unwrap_or(1);
    // logical iteration order is row-major over [x, y, z, t]
    GridData::new(dims, n_meas, arr.iter().copied().collect())
}

pub fn write_nifti(path: &Path, volume: &GridData, ty: FloatType) -> Result<()> {
    let mut shape: Vec<usize> = volume.dims.to_vec();
    if volume.n_meas > 1 {
        shape.push(volume.n_meas);
    } else {
        while shape.len() > 1 && shape[shape.len() - 1] == 1 {
            shape.pop();
        }
    }
    let opts = WriterOptions::new(path);
    let res = match ty {
        FloatType::F64 => {
            let a = Array::from_shape_vec(IxDyn(&shape), volume.data.clone()).map_err(|e| Error::Shape(e.to_string()))?;
            opts.write_nifti(&a)
        }
        FloatType::F32 => {
            let a = Array::from_shape_vec(IxDyn(&shape), volume.data.iter().map(|&v| v as f32).collect()).map_err(|e| Error::Shape(e.to_string()))?;
            opts.write_nifti(&a)
        }
    };
    res.map_err(|e| nifti_err(path, e))
}

/// Non-zero cells of a single-volume NIfTI are inside.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let v = read_nifti(path)?;
    if v.n_meas != 1 {
        bail!(Data, "{}: mask must be a single volume, got {} frames", path.display(), v.n_meas);
    }
    Mask::new(v.dims, v.data.iter().map(|&x| x != 0.0).collect())
}

/// Writes `<dir>/<prefix><name>.nii` per parameter; outside cells are zero.
pub fn write_param_maps(dir: &Path, prefix: &str, params: &ParamSet, mask: &Mask, ty: FloatType) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (name, field) in params.names().iter().zip(params.fields()) {
        let grid = unpack(&crate::Matrix::column(field.clone()), mask, 0.0)?;
        let p = dir.join(format!("{prefix}{name}.nii"));
        write_nifti(&p, &grid, ty)?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_protocol(path: &Path) -> Result<Protocol> {
    Protocol::from_json(&fs::read_to_string(path)?)
}

pub fn read_mesh(path: &Path) -> Result<NeighborGraph> {
    let spec: MeshSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
    spec.graph()
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    shape: [usize; 4],
}

/// Sidecar of `kspace.c64` is `kspace.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Raw little-endian interleaved complex64, row-major over the sidecar shape
/// `[ky, kz, coil, echo]`.
pub fn read_complex_raw(path: &Path) -> Result<([usize; 4], Vec<Complex64>)> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let n: usize = side.shape.iter().product();
    if bytes.len() != 8 * n {
        bail!(Data, "{}: shape {:?} needs {} bytes, file has {}", path.display(), side.shape, 8 * n, bytes.len());
    }
    let f = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
    let v: Vec<Complex64> = bytes.chunks_exact(8).map(|c| Complex64::new(f(&c[..4]), f(&c[4..]))).collect();
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        bail!(Data, "{}: non-finite k-space values", path.display());
    }
    Ok((side.shape, v))
}

pub fn write_complex_raw(path: &Path, shape: [usize; 4], values: &[Complex64]) -> Result<()> {
    if values.len() != shape.iter().product::<usize>() {
        bail!(Shape, "{} values for shape {shape:?}", values.len());
    }
    let mut bytes = Vec::with_capacity(8 * values.len());
    for z in values {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string(&Sidecar { shape })?)?;
    Ok(())
}

/// Combines a real/imaginary NIfTI pair into complex values and the full
/// 4-D shape.
pub fn read_complex_nifti(re: &Path, im: &Path) -> Result<([usize; 4], Vec<Complex64>)> {
    let (a, b) = (read_nifti(re)?, read_nifti(im)?);
    if a.dims != b.dims || a.n_meas != b.n_meas {
        bail!(Shape, "real/imaginary volumes differ in shape");
    }
    let shape = [a.dims[0], a.dims[1], a.dims[2], a.n_meas];
    Ok((shape, a.data.iter().zip(&b.data).map(|(&r, &i)| Complex64::new(r, i)).collect()))
}

pub fn write_complex_nifti(re: &Path, im: &Path, shape: [usize; 4], values: &[Complex64], ty: FloatType) -> Result<()> {
    let dims = [shape[0], shape[1], shape[2]];
    write_nifti(re, &GridData::new(dims, shape[3], values.iter().map(|z| z.re).collect())?, ty)?;
    write_nifti(im, &GridData::new(dims, shape[3], values.iter().map(|z| z.im).collect())?, ty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], m: usize) -> GridData {
        let n = dims.iter().product::<usize>() * m;
        GridData::new(dims, m, (0..n).map(|i| i as f64 * 0.25 - 3.0).collect()).unwrap()
    }

    #[test]
    fn nifti_round_trip_keeps_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (dims, m) in [([3, 4, 2], 5), ([3, 4, 2], 1), ([5, 3, 1], 1), ([2, 1, 1], 3)] {
            let v = ramp(dims, m);
            let p = dir.path().join("v.nii");
            write_nifti(&p, &v, FloatType::F64).unwrap();
            assert_eq!(read_nifti(&p).unwrap(), v);
            write_nifti(&p, &v, FloatType::F32).unwrap();
            assert_eq!(read_nifti(&p).unwrap(), v, "quarter steps are exact in f32");
        }
    }

    #[test]
    fn nifti_header_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        write_nifti(&p, &ramp([3, 4, 2], 5), FloatType::F32).unwrap();
        let b = fs::read(&p).unwrap();
        let i16_at = |o: usize| i16::from_le_bytes([b[o], b[o + 1]]);
        assert_eq!(i32::from_le_bytes([b[0], b[1], b[2], b[3]]), 348);
        assert_eq!((1..=4).map(|k| i16_at(40 + 2 * k)).collect::<Vec<_>>(), vec![3, 4, 2, 5]);
        assert_eq!(i16_at(40), 4);
        assert_eq!(i16_at(70), 16, "datatype float32");
        assert_eq!(i16_at(72), 32, "bitpix");
        let off = f32::from_le_bytes([b[108], b[109], b[110], b[111]]) as usize;
        // x fastest on disk
        let at = |k: usize| f32::from_le_bytes([b[off + 4 * k], b[off + 4 * k + 1], b[off + 4 * k + 2], b[off + 4 * k + 3]]);
        let v = ramp([3, 4, 2], 5);
        assert_eq!(at(1) as f64, v.data[4 * 2 * 5]);
        assert_eq!(b.len(), off + 4 * 3 * 4 * 2 * 5);
    }

    #[test]
    fn rejects_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii.gz");
        assert!(matches!(read_nifti(&p), Err(Error::Data(_))));
        let p = dir.path().join("i.nii");
        let a = Array::from_shape_vec(IxDyn(&[2, 2]), vec![1i16, 2, 3, 4]).unwrap();
        WriterOptions::new(&p).write_nifti(&a).unwrap();
        assert!(matches!(read_nifti(&p), Err(Error::Data(_))));
        assert!(matches!(read_nifti(&dir.path().join("missing.nii")), Err(Error::Io(_))));
    }

    #[test]
    fn mask_and_maps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.nii");
        let g = GridData::new([2, 2, 1], 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        write_nifti(&p, &g, FloatType::F32).unwrap();
        let mask = read_mask(&p).unwrap();
        assert_eq!(mask.inside(), &[false, true, true, false]);
        let ps = ParamSet::new(vec!["a".into()], vec![vec![7.0, 8.0]], vec![0.0], vec![10.0]).unwrap();
        let files = write_param_maps(dir.path(), "fit_", &ps, &mask, FloatType::F64).unwrap();
        assert_eq!(read_nifti(&files[0]).unwrap().data, vec![0.0, 7.0, 8.0, 0.0]);
    }

    #[test]
    fn json_and_raw_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("mesh.json");
        fs::write(&mp, r#"{"n_vertices": 4, "faces": [[0,1,2],[1,2,3]]}"#).unwrap();
        assert_eq!(read_mesh(&mp).unwrap().n_edges(), 5);
        let pp = dir.path().join("prot.json");
        fs::write(&pp, r#"{"TE_s": [0.002, 0.004]}"#).unwrap();
        assert_eq!(read_protocol(&pp).unwrap().n_meas(), 2);

        let shape = [2, 3, 2, 2];
        let vals: Vec<Complex64> = (0..24).map(|k| Complex64::new(k as f64, -0.5 * k as f64)).collect();
        let rp = dir.path().join("k.c64");
        write_complex_raw(&rp, shape, &vals).unwrap();
        assert_eq!(read_complex_raw(&rp).unwrap(), (shape, vals.clone()));
        fs::write(&rp, [0u8; 8]).unwrap();
        assert!(matches!(read_complex_raw(&rp), Err(Error::Data(_))));

        let (re, im) = (dir.path().join("re.nii"), dir.path().join("im.nii"));
        write_complex_nifti(&re, &im, shape, &vals, FloatType::F32).unwrap();
        assert_eq!(read_complex_nifti(&re, &im).unwrap(), (shape, vals));
    }
}
