//! Multi-source object time series: CSV ingestion, min-max normalisation,
//! stratified splits, and a synthetic generator with hierarchy-aware class
//! profiles.
//!
//! CSV layout, one row per object:
//!
//! * radar:   `object_id,t1_b1,t1_b2,...,t<T_r>_b<D_r>` (time-major)
//! * optical: same scheme with `T_o`, `D_o`
//! * labels:  `object_id,leaf_label`, the label being a leaf class name

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::taxonomy::{LabelChain, Taxonomy};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub object_id: String,
    /// `T_r × D_r`
    pub radar: Tensor,
    /// `T_o × D_o`
    pub optical: Tensor,
    pub labels: LabelChain,
}

impl Sample {
    pub fn label(&self, level: usize) -> usize {
        self.labels.at(level)
    }

    /// Radar then optical values, time-major within each source.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.radar.data().to_vec();
        v.extend_from_slice(self.optical.data());
        v
    }
}

/// Time stamps and bands of both sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesShape {
    pub radar_steps: usize,
    pub radar_bands: usize,
    pub optical_steps: usize,
    pub optical_bands: usize,
}

impl SeriesShape {
    /// 26 dual-polarisation radar dates and 21 optical dates with four
    /// reflectance bands plus NDVI.
    pub const REUNION: SeriesShape = SeriesShape {
        radar_steps: 26,
        radar_bands: 2,
        optical_steps: 21,
        optical_bands: 5,
    };

    pub fn variables(&self) -> usize {
        self.radar_steps * self.radar_bands + self.optical_steps * self.optical_bands
    }

    pub fn of(sample: &Sample) -> Self {
        SeriesShape {
            radar_steps: sample.radar.rows(),
            radar_bands: sample.radar.cols(),
            optical_steps: sample.optical.rows(),
            optical_bands: sample.optical.cols(),
        }
    }
}

impl Default for SeriesShape {
    fn default() -> Self {
        SeriesShape::REUNION
    }
}

fn load_err(file: &Path, message: impl Into<String>) -> Error {
    Error::Load {
        file: file.display().to_string(),
        message: message.into(),
    }
}

/// Parsed series table: `(steps, bands)` and rows keyed by object id.
struct SeriesTable {
    steps: usize,
    bands: usize,
    rows: HashMap<String, Vec<f64>>,
}

fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<(usize, usize)> {
    if header.get(0) != Some("object_id") {
        return Err(load_err(path, "first header column must be 'object_id'"));
    }
    let cols: Vec<&str> = header.iter().skip(1).collect();
    if cols.is_empty() {
        return Err(load_err(path, "no value columns"));
    }
    let bands = cols.iter().take_while(|c| c.starts_with("t1_")).count();
    if bands == 0 || cols.len() % bands != 0 {
        return Err(load_err(path, format!("cannot infer bands from header ({} value columns)", cols.len())));
    }
    let steps = cols.len() / bands;
    for (i, c) in cols.iter().enumerate() {
        let want = format!("t{}_b{}", i / bands + 1, i % bands + 1);
        if *c != want {
            return Err(load_err(path, format!("header column {}: expected '{want}', found '{c}'", i + 2)));
        }
    }
    Ok((steps, bands))
}

fn read_series(path: &Path) -> Result<SeriesTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| load_err(path, e.to_string()))?;
    let header = rdr.headers().map_err(|e| load_err(path, e.to_string()))?.clone();
    let (steps, bands) = parse_header(path, &header)?;
    let mut rows = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err(path, format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(load_err(path, format!("row {row}: {} fields, header has {}", rec.len(), header.len())));
        }
        let id = rec[0].to_string();
        let values = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    load_err(path, format!("row {row} column '{}': not a number: '{cell}'", &header[c]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(id.clone(), values).is_some() {
            return Err(load_err(path, format!("row {row}: duplicate object_id '{id}'")));
        }
    }
    Ok(SeriesTable { steps, bands, rows })
}

/// Loads the three tables and expands leaf labels into label chains. Samples
/// follow the order of the labels file.
pub fn load_dataset(radar_csv: &Path, optical_csv: &Path, labels_csv: &Path, tax: &Taxonomy) -> Result<Vec<Sample>> {
    let radar = read_series(radar_csv)?;
    let optical = read_series(optical_csv)?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(labels_csv)
        .map_err(|e| load_err(labels_csv, e.to_string()))?;
    let header = rdr.headers().map_err(|e| load_err(labels_csv, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["object_id", "leaf_label"] {
        return Err(load_err(labels_csv, "header must be 'object_id,leaf_label'"));
    }
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err(labels_csv, format!("row {row}: {e}")))?;
        let (id, label) = (&rec[0], rec.get(1).unwrap_or(""));
        if !seen.insert(id.to_string()) {
            return Err(load_err(labels_csv, format!("row {row}: duplicate object_id '{id}'")));
        }
        let leaf = tax
            .leaf_index(label)
            .ok_or_else(|| load_err(labels_csv, format!("row {row}: unknown leaf label '{label}'")))?;
        let r = radar
            .rows
            .get(id)
            .ok_or_else(|| load_err(radar_csv, format!("object '{id}' (labels row {row}) missing")))?;
        let o = optical
            .rows
            .get(id)
            .ok_or_else(|| load_err(optical_csv, format!("object '{id}' (labels row {row}) missing")))?;
        samples.push(Sample {
            object_id: id.to_string(),
            radar: Tensor::matrix(radar.steps, radar.bands, r.clone())?,
            optical: Tensor::matrix(optical.steps, optical.bands, o.clone())?,
            labels: tax.label_chain(leaf)?,
        });
    }
    if samples.is_empty() {
        return Err(load_err(labels_csv, "no labelled objects"));
    }
    for (table, path) in [(&radar, radar_csv), (&optical, optical_csv)] {
        let mut extra: Vec<&String> = table.rows.keys().filter(|k| !seen.contains(*k)).collect();
        extra.sort();
        if let Some(id) = extra.first() {
            return Err(load_err(path, format!("object '{id}' has no label")));
        }
    }
    Ok(samples)
}

fn write_series(path: &Path, samples: &[Sample], pick: fn(&Sample) -> &Tensor) -> Result<()> {
    let first = pick(&samples[0]);
    let mut w = csv::Writer::from_path(path).map_err(|e| load_err(path, e.to_string()))?;
    let mut header = vec!["object_id".to_string()];
    for t in 1..=first.rows() {
        for b in 1..=first.cols() {
            header.push(format!("t{t}_b{b}"));
        }
    }
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![s.object_id.clone()];
        rec.extend(pick(s).data().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `radar.csv`, `optical.csv`, and `labels.csv` into `dir`.
pub fn write_dataset(dir: &Path, samples: &[Sample], tax: &Taxonomy) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::usage("nothing to write"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_series(&dir.join("radar.csv"), samples, |s| &s.radar)?;
    write_series(&dir.join("optical.csv"), samples, |s| &s.optical)?;
    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| load_err(&path, e.to_string()))?;
    w.write_record(["object_id", "leaf_label"])?;
    for s in samples {
        w.write_record([s.object_id.as_str(), tax.leaf_classes()[s.labels.leaf()].as_str()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Per-band minimum and maximum of each source over a training partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub radar_min: Vec<f64>,
    pub radar_max: Vec<f64>,
    pub optical_min: Vec<f64>,
    pub optical_max: Vec<f64>,
}

fn band_range(series: &[&Tensor]) -> (Vec<f64>, Vec<f64>) {
    let bands = series[0].cols();
    let mut lo = vec![f64::INFINITY; bands];
    let mut hi = vec![f64::NEG_INFINITY; bands];
    for s in series {
        for r in 0..s.rows() {
            for (b, &v) in s.row(r).iter().enumerate() {
                lo[b] = lo[b].min(v);
                hi[b] = hi[b].max(v);
            }
        }
    }
    (lo, hi)
}

fn rescale(t: &Tensor, lo: &[f64], hi: &[f64]) -> Tensor {
    let bands = t.cols();
    let mut out = t.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let b = i % bands;
        let span = hi[b] - lo[b];
        *v = if span > 0.0 { (*v - lo[b]) / span } else { 0.0 };
    }
    out
}

impl NormalizationStats {
    pub fn fit(train: &[Sample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::usage("cannot fit normalisation on an empty set"));
        }
        let (radar_min, radar_max) = band_range(&train.iter().map(|s| &s.radar).collect::<Vec<_>>());
        let (optical_min, optical_max) = band_range(&train.iter().map(|s| &s.optical).collect::<Vec<_>>());
        Ok(NormalizationStats {
            radar_min,
            radar_max,
            optical_min,
            optical_max,
        })
    }

    /// `(x - min) / (max - min)` per band; constant bands map to 0. Values
    /// outside the fitted range are not clamped.
    pub fn apply(&self, samples: &[Sample]) -> Vec<Sample> {
        samples
            .iter()
            .map(|s| Sample {
                radar: rescale(&s.radar, &self.radar_min, &self.radar_max),
                optical: rescale(&s.optical, &self.optical_min, &self.optical_max),
                ..s.clone()
            })
            .collect()
    }
}

/// Seed and partition fractions. The test fraction is the remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: f64,
    pub val: f64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            seed,
            train: 0.5,
            val: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

fn floor_frac(f: f64, n: usize) -> usize {
    (f * n as f64 + 1e-9).floor() as usize
}

/// Hands out `deficit` extra slots, largest fractional remainder first,
/// to classes that still have capacity.
fn distribute(quota: &mut [usize], remainder: &[f64], capacity: &[usize], mut deficit: usize) {
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| remainder[b].total_cmp(&remainder[a]).then(a.cmp(&b)));
    while deficit > 0 {
        let mut progressed = false;
        for &c in &order {
            if deficit == 0 {
                break;
            }
            if quota[c] < capacity[c] {
                quota[c] += 1;
                deficit -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
}

/// Stratified seeded split. Partition sizes are `floor(train·n)`,
/// `floor(val·n)`, and the rest; per-class shares follow the same fractions
/// with largest-remainder rounding.
pub fn split(labels: &[usize], spec: &SplitSpec) -> Result<Split> {
    let n = labels.len();
    if n < 10 {
        return Err(Error::usage(format!("need at least 10 objects to split, got {n}")));
    }
    if !(spec.train > 0.0 && spec.val >= 0.0 && spec.train + spec.val <= 1.0 + 1e-12) {
        return Err(Error::usage(format!("invalid split fractions {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut warnings = Vec::new();
    for (c, members) in groups.iter_mut() {
        members.shuffle(&mut rng);
        if members.len() < 3 {
            let w = format!(
                "class {c} has only {} object(s); it cannot appear in every partition",
                members.len()
            );
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();

    let mut train_q: Vec<usize> = sizes.iter().map(|&s| floor_frac(spec.train, s)).collect();
    let train_r: Vec<f64> = sizes
        .iter()
        .zip(&train_q)
        .map(|(&s, &q)| spec.train * s as f64 - q as f64)
        .collect();
    let n_train = floor_frac(spec.train, n);
    let deficit = n_train.saturating_sub(train_q.iter().sum());
    distribute(&mut train_q, &train_r, &sizes, deficit);

    let left: Vec<usize> = sizes.iter().zip(&train_q).map(|(s, t)| s - t).collect();
    let mut val_q: Vec<usize> = sizes
        .iter()
        .zip(&left)
        .map(|(&s, &l)| floor_frac(spec.val, s).min(l))
        .collect();
    let val_r: Vec<f64> = sizes
        .iter()
        .zip(&val_q)
        .map(|(&s, &q)| spec.val * s as f64 - q as f64)
        .collect();
    let n_val = floor_frac(spec.val, n);
    let deficit = n_val.saturating_sub(val_q.iter().sum());
    distribute(&mut val_q, &val_r, &left, deficit);

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (k, members) in groups.values().enumerate() {
        let (a, b) = (train_q[k], train_q[k] + val_q[k]);
        train.extend_from_slice(&members[..a]);
        val.extend_from_slice(&members[a..b]);
        test.extend_from_slice(&members[b..]);
    }
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(Split {
        train,
        val,
        test,
        warnings,
    })
}

/// Convenience wrapper splitting on leaf labels.
pub fn split_samples(samples: &[Sample], spec: &SplitSpec) -> Result<Split> {
    let labels: Vec<usize> = samples.iter().map(|s| s.labels.leaf()).collect();
    split(&labels, spec)
}

pub fn select(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Seasonal profile contribution of one class for one band.
#[derive(Clone, Copy, Debug)]
struct BandProfile {
    offset: f64,
    amplitude: f64,
    phase: f64,
    cycles: f64,
    trend: f64,
}

impl BandProfile {
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        BandProfile {
            offset: rng.random_range(-1.0..1.0),
            amplitude: rng.random_range(0.5..1.0),
            phase: rng.random_range(0.0..2.0 * PI),
            cycles: rng.random_range(1..=2) as f64,
            trend: rng.random_range(-1.0..1.0),
        }
    }

    fn eval(&self, u: f64, shift: f64, gain: f64) -> f64 {
        self.offset + gain * self.amplitude * (2.0 * PI * self.cycles * u + self.phase + shift).sin() + self.trend * (u - 0.5)
    }
}

/// Relative weight of a level's contribution to the class profile. Deeper
/// levels add smaller deviations, so coarse classes are easier to separate.
const LEVEL_DECAY: f64 = 0.6;

/// Synthetic dataset of `n_objects` samples with balanced leaf classes.
///
/// Every class at every taxonomy level owns a seasonal profile per band; a
/// leaf's mean series is the decayed sum of its ancestors' profiles. With
/// `difficulty > 0` each object gets a random temporal shift, gain, band
/// offsets, and i.i.d. noise, all scaled by `difficulty`. With `difficulty = 0`
/// every object equals its class mean.
pub fn generate_synthetic(
    n_objects: usize,
    tax: &Taxonomy,
    shape: SeriesShape,
    seed: u64,
    difficulty: f64,
) -> Result<Vec<Sample>> {
    if n_objects == 0 {
        return Err(Error::usage("number of objects must be positive"));
    }
    if !(difficulty >= 0.0 && difficulty.is_finite()) {
        return Err(Error::usage(format!("difficulty must be a non-negative number, got {difficulty}")));
    }
    if [shape.radar_steps, shape.radar_bands, shape.optical_steps, shape.optical_bands].contains(&0) {
        return Err(Error::usage(format!("series shape must be positive: {shape:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // profiles[level][class] = (radar bands, optical bands)
    let profiles: Vec<Vec<(Vec<BandProfile>, Vec<BandProfile>)>> = (0..tax.depth())
        .map(|k| {
            (0..tax.classes(k).len())
                .map(|_| {
                    let r = (0..shape.radar_bands).map(|_| BandProfile::random(&mut rng)).collect();
                    let o = (0..shape.optical_bands).map(|_| BandProfile::random(&mut rng)).collect();
                    (r, o)
                })
                .collect()
        })
        .collect();

    let n_leaf = tax.leaf_classes().len();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let leaf = i % n_leaf;
        let chain = tax.label_chain(leaf)?;
        let mut draw = |scale: f64| difficulty * scale * noise.sample(&mut rng);
        let shift = draw(1.2);
        let gain = 1.0 + draw(0.5);
        let render = |steps: usize,
                      bands: usize,
                      pick: &dyn Fn(&(Vec<BandProfile>, Vec<BandProfile>)) -> &Vec<BandProfile>,
                      draw: &mut dyn FnMut(f64) -> f64|
         -> Vec<f64> {
            let band_offsets: Vec<f64> = (0..bands).map(|_| draw(0.8)).collect();
            let mut data = Vec::with_capacity(steps * bands);
            for t in 0..steps {
                let u = t as f64 / steps as f64;
                for (b, bo) in band_offsets.iter().enumerate() {
                    let mut v = 0.0;
                    let mut w = 1.0;
                    for (k, &class) in chain.0.iter().enumerate() {
                        v += w * pick(&profiles[k][class])[b].eval(u, shift, gain);
                        w *= LEVEL_DECAY;
                    }
                    data.push(v + bo + draw(1.0));
                }
            }
            data
        };
        let radar = render(shape.radar_steps, shape.radar_bands, &|p| &p.0, &mut draw);
        let optical = render(shape.optical_steps, shape.optical_bands, &|p| &p.1, &mut draw);
        // bring each source into a plausible physical range
        let radar: Vec<f64> = radar.into_iter().map(|v| -12.0 + 3.0 * v).collect();
        let optical: Vec<f64> = optical.into_iter().map(|v| 0.2 + 0.08 * v).collect();
        samples.push(Sample {
            object_id: format!("obj{i:05}"),
            radar: Tensor::matrix(shape.radar_steps, shape.radar_bands, radar)?,
            optical: Tensor::matrix(shape.optical_steps, shape.optical_bands, optical)?,
            labels: chain,
        });
    }
    Ok(samples)
}

/// Writes a JSON value with a trailing newline.
pub(crate) fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(value)?;
    writeln!(f, "{text}").map_err(|e| Error::io(path, e))
}
