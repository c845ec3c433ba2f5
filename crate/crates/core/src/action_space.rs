//! Clinician action bins, the restricted action space of observed bin
//! combinations, the factored (per-bin additive) Q decomposition, and
//! reconstruction of continuous settings from bins.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::schema::{Mode, CONT_ACTIONS, N_CONT};
use crate::data::HybridAction;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Action-space size stated in the source publication for its bins. The
/// product of the bin counts below is 28,224; both are reported.
pub const PUBLISHED_ACTION_COUNT: usize = 26_880;

#[derive(Clone, Debug, PartialEq)]
pub enum BinKind {
    /// Category codes `0..n`.
    Categorical(usize),
    /// Strictly increasing edges; bin `i` is `[e_i, e_{i+1})`, the last bin
    /// also contains its right edge.
    Edges(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimBins {
    pub name: String,
    pub kind: BinKind,
    /// Extra bin, placed last, for a setting that is inactive.
    pub null_bin: bool,
}

impl DimBins {
    fn value_bins(&self) -> usize {
        match &self.kind {
            BinKind::Categorical(n) => *n,
            BinKind::Edges(e) => e.len() - 1,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.value_bins() + self.null_bin as usize
    }

    pub fn null_index(&self) -> Option<usize> {
        self.null_bin.then(|| self.value_bins())
    }

    pub fn is_null(&self, bin: usize) -> bool {
        self.null_index() == Some(bin)
    }

    /// Left-inclusive lookup.
    pub fn lookup(&self, v: f32) -> Result<usize> {
        let oor = |lo: f32, hi: f32| Error::OutOfRange {
            dimension: self.name.clone(),
            value: v as f64,
            lo: lo as f64,
            hi: hi as f64,
        };
        match &self.kind {
            BinKind::Categorical(n) => {
                let i = v as usize;
                if v < 0.0 || v.fract() != 0.0 || i >= *n {
                    return Err(oor(0.0, (*n - 1) as f32));
                }
                Ok(i)
            }
            BinKind::Edges(e) => {
                let (lo, hi) = (e[0], *e.last().unwrap());
                if !(v >= lo && v <= hi) {
                    return Err(oor(lo, hi));
                }
                let above = e.iter().filter(|&&x| x <= v).count();
                Ok((above - 1).min(e.len() - 2))
            }
        }
    }

    /// Interval of a value bin; `None` for categorical or null bins.
    pub fn interval(&self, bin: usize) -> Option<(f32, f32)> {
        match &self.kind {
            BinKind::Edges(e) if bin + 1 < e.len() => Some((e[bin], e[bin + 1])),
            _ => None,
        }
    }

    pub fn is_last_value_bin(&self, bin: usize) -> bool {
        bin + 1 == self.value_bins()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinSpec {
    pub dims: Vec<DimBins>,
}

const HYBRID_DIMS: [&str; 6] = ["mode", "rr", "vt", "dp", "peep", "fio2"];

impl Default for BinSpec {
    fn default() -> Self {
        let edges = |name: &str, e: &[f32], null_bin| DimBins {
            name: name.into(),
            kind: BinKind::Edges(e.to_vec()),
            null_bin,
        };
        BinSpec {
            dims: vec![
                DimBins { name: "mode".into(), kind: BinKind::Categorical(2), null_bin: false },
                edges("rr", &[5., 10., 15., 20., 25., 30., 35., 60.], false),
                edges("vt", &[3., 4., 5., 6., 7., 8., 9., 10., 11., 12.], false),
                edges("dp", &[0., 6., 10., 14., 18., 22., 26., 40.], true),
                edges("peep", &[0., 4., 8., 12., 16., 20., 50.], true),
                edges("fio2", &[21., 40., 60., 80., 100.], false),
            ],
        }
    }
}

impl BinSpec {
    pub fn new(dims: Vec<DimBins>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("bin spec without dimensions".into()));
        }
        for d in &dims {
            match &d.kind {
                BinKind::Categorical(0) => {
                    return Err(Error::InvalidArgument(format!("`{}` has no categories", d.name)))
                }
                BinKind::Edges(e) if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) => {
                    return Err(Error::InvalidArgument(format!(
                        "`{}` edges must be strictly increasing, at least two",
                        d.name
                    )))
                }
                _ => {}
            }
        }
        Ok(BinSpec { dims })
    }

    /// Purely categorical spec with the given bin counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        Self::new(
            counts
                .iter()
                .enumerate()
                .map(|(i, &n)| DimBins {
                    name: format!("d{i}"),
                    kind: BinKind::Categorical(n),
                    null_bin: false,
                })
                .collect(),
        )
    }

    /// Default bins plus a null bin on tidal volume, needed when tidal
    /// volume is masked under pressure control.
    pub fn with_vt_null_bin() -> Self {
        let mut s = Self::default();
        s.dims[2].null_bin = true;
        s
    }

    pub fn width(&self) -> usize {
        self.dims.iter().map(DimBins::n_bins).sum()
    }

    /// Product of the per-dimension bin counts.
    pub fn full_size(&self) -> usize {
        self.dims.iter().map(DimBins::n_bins).product()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.dims.len());
        let mut acc = 0;
        for d in &self.dims {
            off.push(acc);
            acc += d.n_bins();
        }
        off
    }

    pub fn is_hybrid_layout(&self) -> bool {
        self.dims.len() == 6
            && self.dims.iter().zip(HYBRID_DIMS).all(|(d, n)| d.name == n)
            && self.dims[0].kind == BinKind::Categorical(2)
    }

    fn require_hybrid(&self) -> Result<()> {
        if self.is_hybrid_layout() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "bin spec dimensions must be {HYBRID_DIMS:?}"
            )))
        }
    }

    /// One line per dimension: `name categorical n` or `name e0 e1 ... [null]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.dims {
            out.push_str(&d.name);
            match &d.kind {
                BinKind::Categorical(n) => write!(out, " categorical {n}").unwrap(),
                BinKind::Edges(e) => e.iter().for_each(|x| write!(out, " {x}").unwrap()),
            }
            if d.null_bin {
                out.push_str(" null");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dims = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let loc = || format!("bin spec line {}", ln + 1);
            let mut tok: Vec<&str> = line.split_whitespace().collect();
            let null_bin = tok.last() == Some(&"null");
            if null_bin {
                tok.pop();
            }
            if tok.len() < 2 {
                return Err(Error::parse(loc(), "expected a name and bins"));
            }
            let kind = if tok[1] == "categorical" {
                let n = tok.get(2).ok_or_else(|| Error::parse(loc(), "missing category count"))?;
                BinKind::Categorical(n.parse().map_err(|e| Error::parse(loc(), e))?)
            } else {
                BinKind::Edges(
                    tok[1..]
                        .iter()
                        .map(|t| t.parse::<f32>().map_err(|e| Error::parse(loc(), e)))
                        .collect::<Result<_>>()?,
                )
            };
            dims.push(DimBins { name: tok[0].into(), kind, null_bin });
        }
        Self::new(dims)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// One bin index per dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteAction(pub Vec<usize>);

impl std::fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Bins a hybrid action. Driving pressure under volume control always
/// falls in its null bin; with `mask_vt`, tidal volume under pressure
/// control does too.
pub fn discretize(a: &HybridAction, spec: &BinSpec, mask_vt: bool) -> Result<DiscreteAction> {
    spec.require_hybrid()?;
    let null = |d: usize| {
        spec.dims[d].null_index().ok_or_else(|| {
            Error::InvalidArgument(format!("`{}` has no null bin", spec.dims[d].name))
        })
    };
    let cont = a.continuous();
    let mut out = vec![a.mode.index()];
    for (k, &v) in cont.iter().enumerate() {
        let d = k + 1;
        let range = &CONT_ACTIONS[k];
        let bin = match (k, a.mode) {
            (2, Mode::Vcv) => null(d)?,
            (1, Mode::Pcv) if mask_vt => null(d)?,
            _ => {
                if !range.contains(v) {
                    return Err(Error::OutOfRange {
                        dimension: range.name.into(),
                        value: v as f64,
                        lo: range.lo as f64,
                        hi: range.hi as f64,
                    });
                }
                spec.dims[d].lookup(v)?
            }
        };
        out.push(bin);
    }
    Ok(DiscreteAction(out))
}

/// Statistics of the continuous values that fell in one bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinStats {
    pub count: usize,
    pub mean: f32,
    /// Mean of the values in the most populated cell of a histogram with
    /// 20 cells across the bin (lowest cell wins ties).
    pub mode: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconMethod {
    BinMode,
    GaussianAtMode,
    BinMean,
    Uniform,
}

impl ReconMethod {
    pub const ALL: [ReconMethod; 4] = [
        ReconMethod::BinMode,
        ReconMethod::GaussianAtMode,
        ReconMethod::BinMean,
        ReconMethod::Uniform,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ReconMethod::BinMode => "bin_mode",
            ReconMethod::GaussianAtMode => "gaussian_at_mode",
            ReconMethod::BinMean => "bin_mean",
            ReconMethod::Uniform => "uniform",
        }
    }
}

/// The bin combinations present in a dataset.
#[derive(Clone, Debug)]
pub struct RestrictedActionSpace {
    spec: BinSpec,
    mask_vt: bool,
    combos: Vec<DiscreteAction>,
    index: HashMap<DiscreteAction, usize>,
    one_hot: Matrix,
    /// Column of each combination's bin per dimension, row-major.
    columns: Vec<usize>,
    /// `(continuous dimension, bin) -> stats`, hybrid layout only.
    stats: BTreeMap<(usize, usize), BinStats>,
}

const HIST_CELLS: usize = 20;

impl RestrictedActionSpace {
    /// Deduplicates and sorts the combinations.
    pub fn from_combos(spec: BinSpec, combos: Vec<DiscreteAction>) -> Result<Self> {
        if combos.is_empty() {
            return Err(Error::InvalidArgument("empty restricted action space".into()));
        }
        for c in &combos {
            if c.0.len() != spec.dims.len()
                || c.0.iter().zip(&spec.dims).any(|(&b, d)| b >= d.n_bins())
            {
                return Err(Error::InvalidArgument(format!("combination {c} does not fit the bins")));
            }
        }
        let mut combos = combos;
        combos.sort();
        combos.dedup();
        let offsets = spec.offsets();
        let mut one_hot = Matrix::zeros(combos.len(), spec.width());
        for (r, c) in combos.iter().enumerate() {
            for (d, &b) in c.0.iter().enumerate() {
                one_hot.set(r, offsets[d] + b, 1.0);
            }
        }
        let index = combos.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let columns = combos
            .iter()
            .flat_map(|c| c.0.iter().zip(&offsets).map(|(&b, &o)| o + b))
            .collect();
        Ok(RestrictedActionSpace {
            spec,
            mask_vt: false,
            combos,
            index,
            one_hot,
            columns,
            stats: BTreeMap::new(),
        })
    }

    pub fn build(actions: &[HybridAction], spec: BinSpec, mask_vt: bool) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidArgument("no actions to build the action space from".into()));
        }
        let disc: Vec<DiscreteAction> =
            actions.iter().map(|a| discretize(a, &spec, mask_vt)).collect::<Result<_>>()?;
        let mut values: BTreeMap<(usize, usize), Vec<f32>> = BTreeMap::new();
        for (a, d) in actions.iter().zip(&disc) {
            for (k, v) in a.continuous().into_iter().enumerate() {
                if k == 2 && a.dp.is_none() {
                    continue;
                }
                values.entry((k, d.0[k + 1])).or_default().push(v);
            }
        }
        let mut space = Self::from_combos(spec, disc)?;
        space.mask_vt = mask_vt;
        for ((k, bin), mut vs) in values {
            let (lo, hi) = space.support(k, bin);
            vs.sort_by(f32::total_cmp);
            let mean = (vs.iter().map(|&v| v as f64).sum::<f64>() / vs.len() as f64) as f32;
            let mode = histogram_mode(&vs, lo, hi);
            space.stats.insert((k, bin), BinStats { count: vs.len(), mean, mode });
        }
        Ok(space)
    }

    pub fn spec(&self) -> &BinSpec {
        &self.spec
    }

    pub fn mask_vt(&self) -> bool {
        self.mask_vt
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn combos(&self) -> &[DiscreteAction] {
        &self.combos
    }

    pub fn one_hot(&self) -> &Matrix {
        &self.one_hot
    }

    /// Per-bin column indices of combination `i`.
    pub fn columns_of(&self, i: usize) -> &[usize] {
        let d = self.spec.dims.len();
        &self.columns[i * d..(i + 1) * d]
    }

    pub fn index_of(&self, d: &DiscreteAction) -> Result<usize> {
        self.index.get(d).copied().ok_or_else(|| Error::UnknownAction(d.to_string()))
    }

    pub fn bin_stats(&self, cont_dim: usize, bin: usize) -> Option<&BinStats> {
        self.stats.get(&(cont_dim, bin))
    }

    /// Closed support of a bin of continuous dimension `k`, clipped to the
    /// valid settings range. Null bins span the whole range.
    pub fn support(&self, k: usize, bin: usize) -> (f32, f32) {
        let range = &CONT_ACTIONS[k];
        match self.spec.dims[k + 1].interval(bin) {
            Some((lo, hi)) => (lo.max(range.lo), hi.min(range.hi)),
            None => (range.lo, range.hi),
        }
    }

    /// Whether values equal to the upper end of the support stay in the bin.
    fn closed_above(&self, k: usize, bin: usize) -> bool {
        let dim = &self.spec.dims[k + 1];
        dim.is_null(bin)
            || dim.is_last_value_bin(bin)
            || dim.interval(bin).is_some_and(|(_, hi)| hi > CONT_ACTIONS[k].hi)
    }

    /// Converts a bin combination back to settings.
    pub fn reconstruct<R: Rng>(
        &self,
        d: &DiscreteAction,
        method: ReconMethod,
        rng: &mut R,
    ) -> Result<HybridAction> {
        self.spec.require_hybrid()?;
        let mode = Mode::from_index(d.0[0])?;
        let mut cont = [0.0f32; N_CONT];
        for (k, out) in cont.iter_mut().enumerate() {
            let bin = d.0[k + 1];
            let (lo, hi) = self.support(k, bin);
            let closed = self.closed_above(k, bin);
            let stats = self.stats.get(&(k, bin));
            let centre = || {
                stats.map_or_else(
                    || {
                        log::warn!(
                            "no observations in bin {bin} of `{}`; using midpoint",
                            CONT_ACTIONS[k].name
                        );
                        0.5 * (lo + hi)
                    },
                    |s| match method {
                        ReconMethod::BinMean => s.mean,
                        _ => s.mode,
                    },
                )
            };
            let v = match method {
                ReconMethod::BinMode | ReconMethod::BinMean => centre(),
                ReconMethod::GaussianAtMode => {
                    let mu = centre();
                    let sigma = (hi - lo) / 4.0;
                    if sigma <= 0.0 {
                        mu
                    } else {
                        let normal = Normal::new(mu, sigma).unwrap();
                        let mut v = mu;
                        for _ in 0..1000 {
                            let x: f32 = normal.sample(rng);
                            if x >= lo && (x < hi || (closed && x <= hi)) {
                                v = x;
                                break;
                            }
                        }
                        v
                    }
                }
                ReconMethod::Uniform => lo + rng.random::<f32>() * (hi - lo),
            };
            *out = if !closed && v >= hi { hi.next_down() } else { v.clamp(lo, hi) };
        }
        Ok(HybridAction::from_parts(mode, cont))
    }

    /// Bin-index rows with a header naming the dimensions.
    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self.spec.dims.iter().map(|d| d.name.as_str()).collect();
        let mut out = names.join(",");
        out.push('\n');
        for c in &self.combos {
            let row: Vec<String> = c.0.iter().map(usize::to_string).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn histogram_mode(sorted: &[f32], lo: f32, hi: f32) -> f32 {
    let width = hi - lo;
    if width <= 0.0 {
        return sorted[sorted.len() / 2];
    }
    let cell = |v: f32| (((v - lo) / width * HIST_CELLS as f32) as usize).min(HIST_CELLS - 1);
    let mut counts = [0usize; HIST_CELLS];
    for &v in sorted {
        counts[cell(v)] += 1;
    }
    let best = (0..HIST_CELLS).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let inside: Vec<f64> = sorted.iter().filter(|&&v| cell(v) == best).map(|&v| v as f64).collect();
    (inside.iter().sum::<f64>() / inside.len() as f64) as f32
}

/// `Q(s, combo) = Σ_d q(s, d, bin_d)`: per-bin values times the transposed
/// one-hot matrix.
pub fn factored_q_values(per_bin_q: &Matrix, space: &RestrictedActionSpace) -> Result<Matrix> {
    if per_bin_q.cols() != space.spec.width() {
        return Err(Error::dim("factored_q_values", space.spec.width(), per_bin_q.cols()));
    }
    per_bin_q.matmul_t(&space.one_hot)
}

/// Transposed form of [`factored_q_values`]: takes per-bin values as
/// `bins x batch` and returns `combinations x batch`, summing each
/// combination's bin rows instead of multiplying by the one-hot matrix.
pub fn gather_q_values_t(per_bin_q_t: &Matrix, space: &RestrictedActionSpace) -> Result<Matrix> {
    if per_bin_q_t.rows() != space.spec.width() {
        return Err(Error::dim("gather_q_values_t", space.spec.width(), per_bin_q_t.rows()));
    }
    let d = space.spec.dims.len();
    let b = per_bin_q_t.cols();
    let mut out = Matrix::zeros(space.len(), b);
    for (c, cols) in space.columns.chunks_exact(d).enumerate() {
        let o = out.row_mut(c);
        for &j in cols {
            for (v, &q) in o.iter_mut().zip(per_bin_q_t.row(j)) {
                *v += q;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`gather_q_values_t`]: accumulates `combinations x batch`
/// weights onto `bins x batch`. Equals `(weights^T @ one_hot)^T`.
pub fn scatter_to_bins_t(weights_t: &Matrix, space: &RestrictedActionSpace) -> Result<Matrix> {
    if weights_t.rows() != space.len() {
        return Err(Error::dim("scatter_to_bins_t", space.len(), weights_t.rows()));
    }
    let d = space.spec.dims.len();
    let mut out = Matrix::zeros(space.spec.width(), weights_t.cols());
    for (c, cols) in space.columns.chunks_exact(d).enumerate() {
        let w = weights_t.row(c);
        for &j in cols {
            for (o, &x) in out.row_mut(j).iter_mut().zip(w) {
                *o += x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn act(mode: Mode, rr: f32, vt: f32, dp: f32, peep: f32, fio2: f32) -> HybridAction {
        HybridAction::from_parts(mode, [rr, vt, dp, peep, fio2])
    }

    #[test]
    fn default_widths() {
        let s = BinSpec::default();
        let counts: Vec<usize> = s.dims.iter().map(DimBins::n_bins).collect();
        assert_eq!(counts, vec![2, 7, 9, 8, 7, 4]);
        assert_eq!(s.width(), 37);
        assert_eq!(s.full_size(), 28_224);
        assert_eq!(BinSpec::with_vt_null_bin().width(), 38);
    }

    #[test]
    fn lookups_left_inclusive() {
        let s = BinSpec::default();
        // table labels are 1-based
        assert_eq!(s.dims[2].lookup(6.5).unwrap() + 1, 4);
        assert_eq!(s.dims[1].lookup(10.0).unwrap() + 1, 2);
        assert_eq!(s.dims[1].lookup(9.999).unwrap() + 1, 1);
        assert_eq!(s.dims[1].lookup(60.0).unwrap() + 1, 7);
        assert_eq!(s.dims[5].lookup(100.0).unwrap() + 1, 4);
        assert!(s.dims[1].lookup(61.0).is_err());
    }

    #[test]
    fn discretize_gates_by_mode() {
        let s = BinSpec::default();
        let d = discretize(&act(Mode::Vcv, 14.0, 6.5, 0.0, 5.0, 40.0), &s, false).unwrap();
        assert_eq!(d.0, vec![0, 1, 3, 7, 1, 1]);
        let p = act(Mode::Pcv, 14.0, 6.5, 12.0, 5.0, 40.0);
        assert_eq!(discretize(&p, &s, false).unwrap().0, vec![1, 1, 3, 2, 1, 1]);
        assert!(discretize(&p, &s, true).is_err());
        let m = BinSpec::with_vt_null_bin();
        assert_eq!(discretize(&p, &m, true).unwrap().0[2], 9);
        match discretize(&act(Mode::Vcv, 14.0, 13.0, 0.0, 5.0, 40.0), &s, false) {
            Err(Error::OutOfRange { dimension, .. }) => assert_eq!(dimension, "vt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toy_restricted_space() {
        let spec = BinSpec::from_counts(&[2, 2, 2]).unwrap();
        let combos = ["001", "011", "110", "011"]
            .iter()
            .map(|s| DiscreteAction(s.bytes().map(|b| (b - b'0') as usize).collect()))
            .collect();
        let space = RestrictedActionSpace::from_combos(spec, combos).unwrap();
        assert_eq!(space.len(), 3);
        assert_eq!(space.spec().full_size(), 8);
        for r in 0..space.len() {
            assert_eq!(space.one_hot().row(r).iter().sum::<f32>(), 3.0);
        }
        assert!(matches!(
            space.index_of(&DiscreteAction(vec![1, 1, 1])),
            Err(Error::UnknownAction(_))
        ));
    }

    #[test]
    fn single_action_space() {
        let a = act(Mode::Vcv, 14.0, 6.0, 0.0, 5.0, 40.0);
        let space = RestrictedActionSpace::build(&[a; 10], BinSpec::default(), false).unwrap();
        assert_eq!(space.len(), 1);
        assert!(RestrictedActionSpace::build(&[], BinSpec::default(), false).is_err());
    }

    #[test]
    fn factored_two_dim_toy() {
        let spec = BinSpec::from_counts(&[2, 2]).unwrap();
        let all = vec![
            DiscreteAction(vec![0, 0]),
            DiscreteAction(vec![0, 1]),
            DiscreteAction(vec![1, 0]),
            DiscreteAction(vec![1, 1]),
        ];
        let space = RestrictedActionSpace::from_combos(spec, all).unwrap();
        let q = Matrix::from_rows(&[vec![1.0, 2.0, 10.0, 20.0], vec![-1.0, 0.5, 3.0, -3.0]]).unwrap();
        let out = factored_q_values(&q, &space).unwrap();
        assert_eq!(out.row(0), &[11.0, 21.0, 12.0, 22.0]);
        assert_eq!(out.row(1), &[2.0, -4.0, 3.5, -2.5]);
        assert_eq!(factored_q_values(&Matrix::zeros(2, 4), &space).unwrap(), Matrix::zeros(2, 4));
        assert!(factored_q_values(&Matrix::zeros(2, 5), &space).is_err());
    }

    #[test]
    fn bin_mean_of_uniform_values() {
        let mut rng = stream_rng(1, 0);
        let actions: Vec<HybridAction> = (0..20_000)
            .map(|_| act(Mode::Vcv, 14.0, rng.random_range(6.0..7.0), 0.0, 5.0, 40.0))
            .collect();
        let space = RestrictedActionSpace::build(&actions, BinSpec::default(), false).unwrap();
        let st = space.bin_stats(1, 3).unwrap();
        assert!((st.mean - 6.5).abs() < 0.01, "{}", st.mean);
        let d = discretize(&actions[0], space.spec(), false).unwrap();
        let a = space.reconstruct(&d, ReconMethod::BinMean, &mut rng).unwrap();
        assert_eq!(a.vt, st.mean);
    }

    #[test]
    fn mode_reproduces_quantized_values() {
        let mut actions = vec![act(Mode::Vcv, 14.0, 6.0, 0.0, 5.0, 40.0); 30];
        actions.extend(vec![act(Mode::Vcv, 12.0, 6.5, 0.0, 6.0, 35.0); 10]);
        let space = RestrictedActionSpace::build(&actions, BinSpec::default(), false).unwrap();
        assert_eq!(space.bin_stats(0, 1).unwrap().mode, 14.0);
        assert_eq!(space.bin_stats(1, 3).unwrap().mode, 6.0);
        let d = discretize(&actions[0], space.spec(), false).unwrap();
        let mut rng = stream_rng(2, 0);
        let a = space.reconstruct(&d, ReconMethod::BinMode, &mut rng).unwrap();
        let b = space.reconstruct(&d, ReconMethod::BinMode, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rr, 14.0);
    }

    #[test]
    fn unobserved_bin_falls_back_to_midpoint() {
        let a = act(Mode::Vcv, 14.0, 6.0, 0.0, 5.0, 40.0);
        let space = RestrictedActionSpace::build(&[a], BinSpec::default(), false).unwrap();
        let mut d = discretize(&a, space.spec(), false).unwrap();
        d.0[1] = 0; // rr bin [5, 10) never observed
        let r = space.reconstruct(&d, ReconMethod::BinMode, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(r.rr, 7.5);
    }

    #[test]
    fn spec_text_round_trip() {
        let s = BinSpec::default();
        let text = s.to_text();
        assert!(text.contains("dp 0 6 10 14 18 22 26 40 null\n"));
        assert_eq!(BinSpec::from_text(&text).unwrap(), s);
        assert!(BinSpec::from_text("rr 5 5 10").is_err());
    }

    #[test]
    fn csv_export() {
        let a = act(Mode::Vcv, 14.0, 6.0, 0.0, 5.0, 40.0);
        let space = RestrictedActionSpace::build(&[a], BinSpec::default(), false).unwrap();
        assert_eq!(space.to_csv(), "mode,rr,vt,dp,peep,fio2\n0,1,3,7,1,1\n");
    }

    fn arb_action() -> impl Strategy<Value = HybridAction> {
        (any::<bool>(), 5.0f32..=60.0, 3.0f32..=12.0, 0.0f32..=26.0, 0.0f32..=20.0, 21.0f32..=100.0)
            .prop_map(|(pcv, rr, vt, dp, peep, fio2)| {
                act(if pcv { Mode::Pcv } else { Mode::Vcv }, rr, vt, dp, peep, fio2)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_stays_in_bin(
            actions in prop::collection::vec(arb_action(), 1..60),
            seed in any::<u64>(),
        ) {
            let space = RestrictedActionSpace::build(&actions, BinSpec::default(), false).unwrap();
            let mut rng = stream_rng(seed, 0);
            for d in space.combos() {
                for m in ReconMethod::ALL {
                    let a = space.reconstruct(d, m, &mut rng).unwrap();
                    a.validate().unwrap();
                    prop_assert_eq!(&discretize(&a, space.spec(), false).unwrap(), d, "{:?}", m);
                }
            }
        }

        #[test]
        fn factored_matches_brute_force(
            counts in prop::collection::vec(1usize..5, 1..5),
            seed in any::<u64>(),
        ) {
            let mut rng = stream_rng(seed, 0);
            let spec = BinSpec::from_counts(&counts).unwrap();
            let combos: Vec<DiscreteAction> = (0..rng.random_range(1..20))
                .map(|_| DiscreteAction(counts.iter().map(|&n| rng.random_range(0..n)).collect()))
                .collect();
            let space = RestrictedActionSpace::from_combos(spec, combos).unwrap();
            let width = space.spec().width();
            let q = Matrix::from_vec(3, width, (0..3 * width).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let out = factored_q_values(&q, &space).unwrap();
            let offsets = space.spec().offsets();
            for b in 0..3 {
                for (j, c) in space.combos().iter().enumerate() {
                    let want: f32 = c.0.iter().enumerate().map(|(d, &bin)| q.get(b, offsets[d] + bin)).sum();
                    prop_assert!((out.get(b, j) - want).abs() < 1e-5);
                }
            }
            let gathered = gather_q_values_t(&q.transpose(), &space).unwrap().transpose();
            for (a, b) in gathered.data().iter().zip(out.data()) {
                prop_assert!((a - b).abs() < 1e-5);
            }
            let w = Matrix::from_vec(3, space.len(), (0..3 * space.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let dense = w.matmul(space.one_hot()).unwrap();
            let scattered = scatter_to_bins_t(&w.transpose(), &space).unwrap().transpose();
            for (a, b) in scattered.data().iter().zip(dense.data()) {
                prop_assert!((a - b).abs() < 1e-5);
            }
        }
    }
}
