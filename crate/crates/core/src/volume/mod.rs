//! Masked measurements, parameter fields, acquisition protocols and the
//! grid <-> packed-sample mapping.
//!
//! Grid cells are addressed row-major over up to three spatial axes, the last
//! axis varying fastest. Packed sample `k` is the `k`-th inside cell in that
//! order.

mod graph;

pub use graph::{grid_graph, mesh_graph, Connectivity, MeshSpec, NeighborGraph};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::matrix::Matrix;

/// Boolean selection over a grid of up to three spatial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: [usize; 3],
    inside: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], inside: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) {
            bail!(Shape, "mask dims must all be >= 1, got {dims:?}");
        }
        if inside.len() != dims.iter().product::<usize>() {
            bail!(Shape, "mask of dims {dims:?} needs {} cells, got {}", dims.iter().product::<usize>(), inside.len());
        }
        if !inside.iter().any(|&b| b) {
            bail!(Data, "mask selects no cells");
        }
        Ok(Self { dims, inside })
    }

    /// Every cell inside.
    pub fn full(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, vec![true; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n_cells(&self) -> usize {
        self.inside.len()
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn linear_index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> [usize; 3] {
        let z = idx % self.dims[2];
        let y = (idx / self.dims[2]) % self.dims[1];
        let x = idx / (self.dims[1] * self.dims[2]);
        [x, y, z]
    }

    /// Grid index of every inside cell, in packed order.
    pub fn packed_cells(&self) -> Vec<usize> {
        self.inside.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    /// Map from grid index to packed index.
    pub fn packed_lookup(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.inside
            .iter()
            .map(|&b| {
                b.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }
}

/// Grid-shaped data: `dims` spatial cells times `n_meas` values per cell,
/// measurement index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub dims: [usize; 3],
    pub n_meas: usize,
    pub data: Vec<f64>,
}

impl GridData {
    pub fn new(dims: [usize; 3], n_meas: usize, data: Vec<f64>) -> Result<Self> {
        let need = dims.iter().product::<usize>() * n_meas;
        if data.len() != need {
            bail!(Shape, "grid {dims:?} x {n_meas} needs {need} values, got {}", data.len());
        }
        Ok(Self { dims, n_meas, data })
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.n_meas..(idx + 1) * self.n_meas]
    }
}

/// Packed measurements `[n_samples x n_meas]` with optional weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredData {
    values: Matrix,
    weights: Option<Matrix>,
    sample_origin: Option<Vec<[usize; 3]>>,
}

impl MeasuredData {
    pub fn new(values: Matrix, weights: Option<Matrix>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            bail!(Shape, "measured data must have at least one sample and one measurement");
        }
        if !values.is_finite() {
            bail!(Data, "measured values contain non-finite entries");
        }
        if let Some(w) = &weights {
            if w.shape() != values.shape() {
                bail!(Shape, "weights shape {:?} differs from data shape {:?}", w.shape(), values.shape());
            }
            if w.as_slice().iter().any(|&x| !x.is_finite() || x < 0.0) {
                bail!(Data, "weights must be finite and non-negative");
            }
        }
        Ok(Self { values, weights, sample_origin: None })
    }

    pub fn with_origin(mut self, origin: Vec<[usize; 3]>) -> Result<Self> {
        if origin.len() != self.n_samples() {
            bail!(Shape, "sample origin has {} entries for {} samples", origin.len(), self.n_samples());
        }
        self.sample_origin = Some(origin);
        Ok(self)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn weights(&self) -> Option<&Matrix> {
        self.weights.as_ref()
    }

    pub fn sample_origin(&self) -> Option<&[[usize; 3]]> {
        self.sample_origin.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.values.rows()
    }

    pub fn n_meas(&self) -> usize {
        self.values.cols()
    }

    /// Weight of one entry; absent weights mean all ones.
    #[inline]
    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w.get(r, c))
    }

    /// Number of entries that contribute to the data term (weight > 0).
    pub fn n_active(&self) -> usize {
        match &self.weights {
            None => self.values.len(),
            Some(w) => w.as_slice().iter().filter(|&&x| x > 0.0).count(),
        }
    }

    /// Subset of samples, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_samples()) {
            bail!(Index, "sample {bad} out of range for {} samples", self.n_samples());
        }
        let mut out = Self::new(self.values.select_rows(idx), self.weights.as_ref().map(|w| w.select_rows(idx)))?;
        if let Some(o) = &self.sample_origin {
            out.sample_origin = Some(idx.iter().map(|&i| o[i]).collect());
        }
        Ok(out)
    }
}

/// Named per-sample parameter fields with scalar box bounds.
///
/// Bounds are either both finite (`lb < ub`) or both infinite, which marks an
/// unconstrained parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    fields: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl ParamSet {
    pub fn new(names: Vec<String>, fields: Vec<Vec<f64>>, lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            bail!(Config, "parameter set is empty");
        }
        if fields.len() != p || lb.len() != p || ub.len() != p {
            bail!(Shape, "names, fields and bounds must have equal length");
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                bail!(Config, "duplicate parameter name '{n}'");
            }
            if !(lb[i] < ub[i]) || lb[i].is_nan() || ub[i].is_nan() {
                bail!(Config, "parameter '{n}': lower bound {} must be below upper bound {}", lb[i], ub[i]);
            }
            if lb[i].is_finite() != ub[i].is_finite() {
                bail!(Config, "parameter '{n}': bounds must be both finite or both infinite");
            }
        }
        let n = fields[0].len();
        if n == 0 {
            bail!(Shape, "parameter fields are empty");
        }
        for (i, f) in fields.iter().enumerate() {
            if f.len() != n {
                bail!(Shape, "field '{}' has {} values, expected {n}", names[i], f.len());
            }
            if let Some(v) = f.iter().find(|v| !(**v >= lb[i] && **v <= ub[i])) {
                bail!(Domain, "parameter '{}' value {v} outside [{}, {}]", names[i], lb[i], ub[i]);
            }
        }
        Ok(Self { names, fields, lb, ub })
    }

    /// Every sample set to the same value per parameter.
    pub fn uniform(names: &[&str], n: usize, values: &[f64], lb: &[f64], ub: &[f64]) -> Result<Self> {
        if values.len() != names.len() {
            bail!(Shape, "{} values for {} parameters", values.len(), names.len());
        }
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            values.iter().map(|&v| vec![v; n]).collect(),
            lb.to_vec(),
            ub.to_vec(),
        )
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.fields[0].len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        match self.names.iter().position(|n| n == name) {
            Some(i) => Ok(i),
            None => bail!(Config, "unknown parameter '{name}' (have {:?})", self.names),
        }
    }

    pub fn field(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.fields[self.index_of(name)?])
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub
    }

    /// Parameter vector of one sample, in name order.
    pub fn sample(&self, s: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f[s]).collect()
    }

    /// Same names and bounds, new fields (validated).
    pub fn with_fields(&self, fields: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.names.clone(), fields, self.lb.clone(), self.ub.clone())
    }

    /// Copy with every value clamped into its bounds.
    pub fn clamped(&self) -> Self {
        let fields = self
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| f.iter().map(|v| v.clamp(self.lb[i], self.ub[i])).collect())
            .collect();
        Self { fields, ..self.clone() }
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_samples()) {
            bail!(Index, "sample {bad} out of range for {} samples", self.n_samples());
        }
        self.with_fields(self.fields.iter().map(|f| idx.iter().map(|&i| f[i]).collect()).collect())
    }

    /// Appends a parameter (e.g. the sampled noise level for MCMC).
    pub fn with_param(&self, name: &str, field: Vec<f64>, lb: f64, ub: f64) -> Result<Self> {
        let mut names = self.names.clone();
        let mut fields = self.fields.clone();
        let (mut l, mut u) = (self.lb.clone(), self.ub.clone());
        names.push(name.to_string());
        fields.push(field);
        l.push(lb);
        u.push(ub);
        Self::new(names, fields, l, u)
    }
}

/// Acquisition variables, each broadcastable to `[n_samples x n_meas]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Protocol {
    axes: BTreeMap<String, Matrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AxisJson {
    Row(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl Protocol {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an axis shared by all samples (`[1 x n_meas]`).
    pub fn with_row(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.insert(name, Matrix::row(values))?;
        Ok(self)
    }

    pub fn insert(&mut self, name: &str, axis: Matrix) -> Result<()> {
        if !axis.is_finite() {
            bail!(Data, "protocol axis '{name}' has non-finite entries");
        }
        if axis.is_empty() {
            bail!(Shape, "protocol axis '{name}' is empty");
        }
        self.axes.insert(name.to_string(), axis);
        Ok(())
    }

    pub fn axis(&self, name: &str) -> Result<&Matrix> {
        match self.axes.get(name) {
            Some(m) => Ok(m),
            None => bail!(Config, "protocol has no axis '{name}' (have {:?})", self.axes.keys().collect::<Vec<_>>()),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.axes.keys().map(|s| s.as_str())
    }

    /// Measurement count implied by the widest axis.
    pub fn n_meas(&self) -> usize {
        self.axes.values().map(|m| m.cols()).max().unwrap_or(0)
    }

    /// Checks every axis broadcasts to `[n_samples x n_meas]`.
    pub fn check(&self, n_samples: usize, n_meas: usize) -> Result<()> {
        for (name, m) in &self.axes {
            let rows_ok = m.rows() == 1 || m.rows() == n_samples;
            let cols_ok = m.cols() == 1 || m.cols() == n_meas;
            if !rows_ok || !cols_ok {
                bail!(Shape, "protocol axis '{name}' of shape {:?} does not broadcast to [{n_samples} x {n_meas}]", m.shape());
            }
        }
        Ok(())
    }

    /// Restricts per-sample axes to a subset of samples.
    pub fn select(&self, idx: &[usize]) -> Self {
        let axes = self
            .axes
            .iter()
            .map(|(k, m)| (k.clone(), if m.rows() == 1 { m.clone() } else { m.select_rows(idx) }))
            .collect();
        Self { axes }
    }

    /// Parses `{"TE_s": [..]}`; nested arrays give per-sample rows.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, AxisJson> = serde_json::from_str(text)?;
        let mut p = Protocol::new();
        for (k, v) in raw {
            let m = match v {
                AxisJson::Row(r) => Matrix::row(r),
                AxisJson::Rows(rows) => {
                    let cols = rows.first().map_or(0, |r| r.len());
                    if rows.iter().any(|r| r.len() != cols) {
                        bail!(Shape, "protocol axis '{k}' has ragged rows");
                    }
                    let n = rows.len();
                    Matrix::new(n, cols, rows.into_iter().flatten().collect())?
                }
            };
            p.insert(&k, m)?;
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw: BTreeMap<&str, AxisJson> = self
            .axes
            .iter()
            .map(|(k, m)| {
                let v = if m.rows() == 1 {
                    AxisJson::Row(m.as_slice().to_vec())
                } else {
                    AxisJson::Rows((0..m.rows()).map(|r| m.row_slice(r).to_vec()).collect())
                };
                (k.as_str(), v)
            })
            .collect();
        Ok(serde_json::to_string_pretty(&raw)?)
    }
}

/// Selects the inside cells of a grid volume, in row-major order.
pub fn pack(volume: &GridData, mask: &Mask) -> Result<MeasuredData> {
    if volume.dims != mask.dims() {
        bail!(Shape, "volume dims {:?} differ from mask dims {:?}", volume.dims, mask.dims());
    }
    let cells = mask.packed_cells();
    let mut data = Vec::with_capacity(cells.len() * volume.n_meas);
    for &c in &cells {
        data.extend_from_slice(volume.cell(c));
    }
    let values = Matrix::new(cells.len(), volume.n_meas, data)?;
    let origin = cells.iter().map(|&c| mask.coord(c)).collect();
    MeasuredData::new(values, None)?.with_origin(origin)
}

/// Scatters packed rows back onto the grid; outside cells get `fill`.
pub fn unpack(packed: &Matrix, mask: &Mask, fill: f64) -> Result<GridData> {
    if packed.rows() != mask.count() {
        bail!(Shape, "{} packed rows for a mask with {} inside cells", packed.rows(), mask.count());
    }
    let w = packed.cols();
    let mut data = vec![fill; mask.n_cells() * w];
    for (k, c) in mask.packed_cells().into_iter().enumerate() {
        data[c * w..(c + 1) * w].copy_from_slice(packed.row_slice(k));
    }
    GridData::new(mask.dims(), w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: [usize; 3], n_meas: usize) -> GridData {
        let n = dims.iter().product::<usize>() * n_meas;
        GridData::new(dims, n_meas, (0..n).map(|i| i as f64 + 0.5).collect()).unwrap()
    }

    #[test]
    fn pack_full_mask_is_row_major() {
        let v = grid([2, 2, 1], 1);
        let m = Mask::full([2, 2, 1]).unwrap();
        let d = pack(&v, &m).unwrap();
        assert_eq!(d.values().as_slice(), &[0.5, 1.5, 2.5, 3.5]);
        assert_eq!(d.sample_origin().unwrap()[2], [1, 0, 0]);
    }

    #[test]
    fn pack_single_cell() {
        let v = grid([2, 2, 1], 1);
        let m = Mask::new([2, 2, 1], vec![false, false, true, false]).unwrap();
        let d = pack(&v, &m).unwrap();
        assert_eq!(d.values().as_slice(), &[2.5]);
    }

    #[test]
    fn checkerboard_round_trip() {
        let dims = [3, 3, 3];
        let v = grid(dims, 2);
        let inside: Vec<bool> = (0..27).map(|i| i % 2 == 0).collect();
        let m = Mask::new(dims, inside.clone()).unwrap();
        let d = pack(&v, &m).unwrap();
        assert_eq!(d.n_samples(), inside.iter().filter(|&&b| b).count());
        let back = unpack(d.values(), &m, 0.0).unwrap();
        for c in 0..27 {
            for k in 0..2 {
                let want = if inside[c] { v.data[c * 2 + k] } else { 0.0 };
                assert_eq!(back.data[c * 2 + k], want);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let v = grid([2, 2, 1], 1);
        let m = Mask::full([2, 1, 2]).unwrap();
        assert!(matches!(pack(&v, &m), Err(crate::Error::Shape(_))));
        let m = Mask::full([2, 2, 1]).unwrap();
        assert!(matches!(unpack(&Matrix::column(vec![1.0; 3]), &m, 0.0), Err(crate::Error::Shape(_))));
        assert!(Mask::new([2, 1, 1], vec![false, false]).is_err());
        assert!(Mask::new([0, 1, 1], vec![]).is_err());
    }

    #[test]
    fn paramset_validation() {
        assert!(ParamSet::uniform(&["a"], 3, &[1.0], &[0.0], &[2.0]).is_ok());
        assert!(ParamSet::uniform(&["a"], 3, &[3.0], &[0.0], &[2.0]).is_err());
        assert!(ParamSet::uniform(&["a"], 3, &[1.0], &[2.0], &[2.0]).is_err());
        assert!(ParamSet::uniform(&["a", "a"], 3, &[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0]).is_err());
        assert!(ParamSet::uniform(&["a"], 3, &[1.0], &[f64::NEG_INFINITY], &[f64::INFINITY]).is_ok());
        assert!(ParamSet::uniform(&["a"], 3, &[1.0], &[0.0], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn measured_data_validation() {
        let v = Matrix::new(2, 2, vec![1.0; 4]).unwrap();
        assert!(MeasuredData::new(v.clone(), Some(Matrix::new(2, 2, vec![1.0, -1.0, 1.0, 1.0]).unwrap())).is_err());
        assert!(MeasuredData::new(v.clone(), Some(Matrix::zeros(2, 1))).is_err());
        let d = MeasuredData::new(v, Some(Matrix::new(2, 2, vec![1.0, 0.0, 2.0, 1.0]).unwrap())).unwrap();
        assert_eq!(d.n_active(), 3);
    }

    #[test]
    fn protocol_json() {
        let p = Protocol::from_json(r#"{"TE_s":[0.003,0.008],"b":[[1,2],[3,4],[5,6]]}"#).unwrap();
        assert_eq!(p.n_meas(), 2);
        assert!(p.check(3, 2).is_ok());
        assert!(p.check(4, 2).is_err());
        let again = Protocol::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, again);
    }
}
