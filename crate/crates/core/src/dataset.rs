//! Operator-learning datasets: generation, the binary file format, function
//! level train/test splits and shuffled mini-batches.
//!
//! A dataset holds `n_functions` input pairs `(u, v)` and `P` query records
//! per pair. In memory each pair is stored once; on disk every record carries
//! its own copy of the sensor values.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "EDONDS1"  u8 problem  u32 m  u32 n_functions  u32 P  u64 master_seed
//! u32 json_len  json_len bytes of generation parameters
//! n_functions * P records of (m + m + 2 + 1) f64: u, v, x, t, s
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pde::{self, SolutionField, SolverGrid};
use crate::rng;
use crate::sampler::{self, FourierSeries, FourierSpec, FunctionSample, GrfSampler, GrfSpec, SensorGrid};
use crate::tensor::Tensor2;

pub const DATASET_MAGIC: &[u8; 7] = b"EDONDS1";

/// Replacement draws attempted for one function index before giving up.
pub const MAX_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    #[serde(rename = "diffusion")]
    Diffusion,
    #[serde(rename = "advdiff")]
    AdvectionDiffusion,
}

impl Problem {
    pub fn id(self) -> u8 {
        match self {
            Problem::Diffusion => 0,
            Problem::AdvectionDiffusion => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Problem::Diffusion),
            1 => Ok(Problem::AdvectionDiffusion),
            other => Err(Error::Format(format!("unknown problem id {other}"))),
        }
    }

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Problem::Diffusion => "diffusion",
            Problem::AdvectionDiffusion => "advdiff",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "diffusion" => Ok(Problem::Diffusion),
            "advdiff" => Ok(Problem::AdvectionDiffusion),
            other => Err(Error::Usage(format!(
                "unknown problem '{other}' (valid problems: diffusion, advdiff)"
            ))),
        }
    }

    /// `(base, scale)` of `a(x) = base + scale · (u(x) + u(1-x)) / 2`.
    pub fn coefficient_params(self) -> (f64, f64) {
        match self {
            Problem::Diffusion => (0.1, 0.1),
            Problem::AdvectionDiffusion => (1.0, 0.1),
        }
    }

    pub fn solve(self, a: &[f64], v: &[f64], grid: SolverGrid) -> Result<SolutionField> {
        match self {
            Problem::Diffusion => pde::solve_diffusion(a, v, grid),
            Problem::AdvectionDiffusion => pde::solve_advection_diffusion(a, v, grid),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationParams {
    pub grf: GrfSpec,
    pub fourier: FourierSpec,
    pub solver: SolverGrid,
    pub sensor_count: usize,
    pub coefficient_floor: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            grf: GrfSpec::default(),
            fourier: FourierSpec::default(),
            solver: SolverGrid::default(),
            sensor_count: 101,
            coefficient_floor: 0.02,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        self.grf.validate()?;
        self.fourier.validate()?;
        self.solver.validate()?;
        if !(self.coefficient_floor > 0.0) {
            return Err(Error::Parameter(format!(
                "coefficient floor must be > 0, got {}",
                self.coefficient_floor
            )));
        }
        SensorGrid::new(self.sensor_count)?.stride_within(&SensorGrid::new(self.solver.nx)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub problem: Problem,
    pub m: usize,
    pub n_functions: usize,
    pub queries_per_function: usize,
    pub master_seed: u64,
    pub params: GenerationParams,
}

impl DatasetHeader {
    pub fn record_count(&self) -> usize {
        self.n_functions * self.queries_per_function
    }
}

/// Sensor values of one input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub x: f64,
    pub t: f64,
    pub target: f64,
}

/// One training example, borrowing the sensor values of its pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorRecord<'a> {
    pub u_sensors: &'a [f64],
    pub v_sensors: &'a [f64],
    pub query: (f64, f64),
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    header: DatasetHeader,
    functions: Vec<FunctionPair>,
    queries: Vec<Query>,
}

/// A freshly drawn input pair with its reference solution.
#[derive(Debug, Clone)]
pub struct DrawnFunction {
    pub pair: FunctionPair,
    pub u: FunctionSample,
    pub v: FunctionSample,
    pub coefficient: FunctionSample,
    pub field: SolutionField,
}

/// Samplers shared by every function of a generation run.
#[derive(Debug, Clone)]
pub struct FunctionDrawer {
    problem: Problem,
    params: GenerationParams,
    grf: GrfSampler,
    sensors: SensorGrid,
    dense: SensorGrid,
    stride: usize,
}

impl FunctionDrawer {
    pub fn new(problem: Problem, params: GenerationParams) -> Result<Self> {
        params.validate()?;
        let sensors = SensorGrid::new(params.sensor_count)?;
        let dense = SensorGrid::new(params.solver.nx)?;
        let stride = sensors.stride_within(&dense)?;
        let grf = GrfSampler::new(&params.grf, &dense)?;
        Ok(Self {
            problem,
            params,
            grf,
            sensors,
            dense,
            stride,
        })
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    /// Draws `u` and `v` from streams derived from `seed` and solves the PDE.
    pub fn draw(&self, seed: u64) -> Result<DrawnFunction> {
        let u = FunctionSample::from_dense(self.grf.draw(&mut rng::stream(seed, &[0])), self.stride);
        let series = FourierSeries::random(&self.params.fourier, &mut rng::stream(seed, &[1]))?;
        let v = FunctionSample {
            values: series.eval_on(&self.sensors),
            dense_values: Some(series.eval_on(&self.dense)),
        };
        let (base, scale) = self.problem.coefficient_params();
        let coefficient = sampler::diffusion_coefficient(&u, base, scale, self.params.coefficient_floor)?;
        let field = self.problem.solve(coefficient.finest(), v.finest(), self.params.solver)?;
        Ok(DrawnFunction {
            pair: FunctionPair {
                u: u.values.clone(),
                v: v.values.clone(),
            },
            u,
            v,
            coefficient,
            field,
        })
    }
}

/// Draws function `index` (with replacement draws on solver failure) and its
/// `p` query records.
fn generate_function(
    drawer: &FunctionDrawer,
    master_seed: u64,
    index: usize,
    p: usize,
) -> Result<(FunctionPair, Vec<Query>)> {
    let mut last_error = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = rng::derive_seed(master_seed, &[index as u64, attempt]);
        let drawn = match drawer.draw(seed) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("function {index}, attempt {attempt}: {e}; drawing a replacement");
                last_error = Some(e);
                continue;
            }
        };
        let mut qrng = rng::stream(seed, &[2]);
        let queries = (0..p)
            .map(|_| {
                let x: f64 = qrng.random_range(0.0..=1.0);
                let t: f64 = qrng.random_range(0.0..=1.0);
                drawn.field.sample_query(x, t).map(|target| Query { x, t, target })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((drawn.pair, queries));
    }
    Err(last_error.unwrap_or_else(|| Error::Numeric(format!("function {index}: no attempts made"))))
}

impl Dataset {
    /// Generates a dataset; the result depends only on the arguments, never on
    /// the number of worker threads.
    pub fn generate(
        problem: Problem,
        n_functions: usize,
        queries_per_function: usize,
        master_seed: u64,
        params: GenerationParams,
    ) -> Result<Self> {
        if n_functions == 0 || queries_per_function == 0 {
            return Err(Error::Parameter(format!(
                "need at least one function and one query (got {n_functions} functions, {queries_per_function} queries)"
            )));
        }
        for (name, n) in [("functions", n_functions), ("queries", queries_per_function)] {
            if u32::try_from(n).is_err() {
                return Err(Error::Parameter(format!("{name} count {n} exceeds the file format limit")));
            }
        }
        let drawer = FunctionDrawer::new(problem, params)?;
        let generated = (0..n_functions)
            .into_par_iter()
            .map(|i| generate_function(&drawer, master_seed, i, queries_per_function))
            .collect::<Result<Vec<_>>>()?;
        let mut functions = Vec::with_capacity(n_functions);
        let mut queries = Vec::with_capacity(n_functions * queries_per_function);
        for (pair, q) in generated {
            functions.push(pair);
            queries.extend(q);
        }
        Ok(Self {
            header: DatasetHeader {
                problem,
                m: params.sensor_count,
                n_functions,
                queries_per_function,
                master_seed,
                params,
            },
            functions,
            queries,
        })
    }

    /// Assembles a dataset from parts, checking every invariant of the format.
    pub fn from_parts(header: DatasetHeader, functions: Vec<FunctionPair>, queries: Vec<Query>) -> Result<Self> {
        header.params.validate()?;
        if header.m != header.params.sensor_count {
            return Err(Error::Format(format!(
                "header m={} disagrees with generation parameters ({} sensors)",
                header.m, header.params.sensor_count
            )));
        }
        if header.n_functions == 0 || header.queries_per_function == 0 {
            return Err(Error::Format("dataset must hold at least one record".into()));
        }
        if functions.len() != header.n_functions || queries.len() != header.record_count() {
            return Err(Error::Format(format!(
                "expected {} functions and {} records, got {} and {}",
                header.n_functions,
                header.record_count(),
                functions.len(),
                queries.len()
            )));
        }
        for (i, f) in functions.iter().enumerate() {
            if f.u.len() != header.m || f.v.len() != header.m {
                return Err(Error::Format(format!("function {i} does not have {} sensors", header.m)));
            }
            if f.u.iter().chain(&f.v).any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("function {i} has non-finite sensor values")));
            }
        }
        for (i, q) in queries.iter().enumerate() {
            if !(0.0..=1.0).contains(&q.x) || !(0.0..=1.0).contains(&q.t) || !q.target.is_finite() {
                return Err(Error::Format(format!("record {i} has an invalid query or target")));
            }
        }
        Ok(Self {
            header,
            functions,
            queries,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn problem(&self) -> Problem {
        self.header.problem
    }

    pub fn m(&self) -> usize {
        self.header.m
    }

    pub fn n_functions(&self) -> usize {
        self.header.n_functions
    }

    pub fn queries_per_function(&self) -> usize {
        self.header.queries_per_function
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn functions(&self) -> &[FunctionPair] {
        &self.functions
    }

    pub fn function_of(&self, record: usize) -> usize {
        record / self.header.queries_per_function
    }

    pub fn record(&self, index: usize) -> OperatorRecord<'_> {
        let pair = &self.functions[self.function_of(index)];
        let q = self.queries[index];
        OperatorRecord {
            u_sensors: &pair.u,
            v_sensors: &pair.v,
            query: (q.x, q.t),
            target: q.target,
        }
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let h = &self.header;
        let json = serde_json::to_vec(&h.params)?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&[h.problem.id()])?;
        w.write_all(&(h.m as u32).to_le_bytes())?;
        w.write_all(&(h.n_functions as u32).to_le_bytes())?;
        w.write_all(&(h.queries_per_function as u32).to_le_bytes())?;
        w.write_all(&h.master_seed.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for (i, q) in self.queries.iter().enumerate() {
            let pair = &self.functions[self.function_of(i)];
            for value in pair.u.iter().chain(&pair.v).chain([&q.x, &q.t, &q.target]) {
                w.write_all(&value.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        if cursor.take(7)? != DATASET_MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let problem = Problem::from_id(cursor.take(1)?[0])?;
        let m = cursor.u32()? as usize;
        let n_functions = cursor.u32()? as usize;
        let p = cursor.u32()? as usize;
        let master_seed = u64::from_le_bytes(cursor.take(8)?.try_into().expect("8 bytes"));
        let json_len = cursor.u32()? as usize;
        let params: GenerationParams = serde_json::from_slice(cursor.take(json_len)?)?;
        let header = DatasetHeader {
            problem,
            m,
            n_functions,
            queries_per_function: p,
            master_seed,
            params,
        };
        let width = 2 * m + 3;
        let expected = header
            .record_count()
            .checked_mul(width * 8)
            .ok_or_else(|| Error::Format("record count overflows".into()))?;
        let body = &bytes[cursor.pos..];
        if body.len() != expected {
            return Err(Error::Format(format!(
                "record section has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let mut functions: Vec<FunctionPair> = Vec::with_capacity(n_functions);
        let mut queries = Vec::with_capacity(header.record_count());
        let mut record = vec![0.0; width];
        for (i, raw) in body.chunks_exact(width * 8).enumerate() {
            for (value, chunk) in record.iter_mut().zip(raw.chunks_exact(8)) {
                *value = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            let (u, rest) = record.split_at(m);
            let (v, tail) = rest.split_at(m);
            if i % p == 0 {
                functions.push(FunctionPair {
                    u: u.to_vec(),
                    v: v.to_vec(),
                });
            } else {
                let pair = functions.last().expect("pushed at group start");
                if !same_bits(&pair.u, u) || !same_bits(&pair.v, v) {
                    return Err(Error::Format(format!(
                        "record {i} does not share the sensor values of function {}",
                        i / p
                    )));
                }
            }
            queries.push(Query {
                x: tail[0],
                t: tail[1],
                target: tail[2],
            });
        }
        Self::from_parts(header, functions, queries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized file.
    pub fn digest(&self) -> String {
        let mut hasher = HashWriter(Sha256::new());
        self.write_to(&mut hasher).expect("hashing cannot fail");
        hex::encode(hasher.0.finalize())
    }

    /// Random function-level partition: `round(train_fraction · n)` functions
    /// go to the train side.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.n_functions();
        let n_train = (train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Parameter(format!(
                "train fraction {train_fraction} on {n} functions leaves one side empty"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, &[]));
        let mut train_functions = order[..n_train].to_vec();
        let mut test_functions = order[n_train..].to_vec();
        train_functions.sort_unstable();
        test_functions.sort_unstable();
        Ok(DatasetSplit {
            queries_per_function: self.queries_per_function(),
            train_functions,
            test_functions,
        })
    }

    /// Copies the given records into dense batch matrices.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let m = self.m();
        let b = indices.len();
        let mut u = Vec::with_capacity(b * m);
        let mut v = Vec::with_capacity(b * m);
        let mut y = Vec::with_capacity(b * 2);
        let mut s = Vec::with_capacity(b);
        for &i in indices {
            let r = self.record(i);
            u.extend_from_slice(r.u_sensors);
            v.extend_from_slice(r.v_sensors);
            y.extend_from_slice(&[r.query.0, r.query.1]);
            s.push(r.target);
        }
        Batch {
            indices: indices.to_vec(),
            u: Tensor2::from_vec(b, m, u).expect("validated values"),
            v: Tensor2::from_vec(b, m, v).expect("validated values"),
            y: Tensor2::from_vec(b, 2, y).expect("validated values"),
            s,
        }
    }

    /// Shuffled mini-batches over `records`; the order depends only on
    /// `epoch_seed`.
    pub fn batch_iter<'a>(&'a self, records: &[usize], batch_size: usize, epoch_seed: u64) -> Result<BatchIter<'a>> {
        if batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        if records.is_empty() {
            return Err(Error::Parameter("cannot batch an empty split side".into()));
        }
        let mut order = records.to_vec();
        order.shuffle(&mut rng::stream(epoch_seed, &[]));
        Ok(BatchIter {
            dataset: self,
            order,
            batch_size,
            next: 0,
        })
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("dataset truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Function-level partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    queries_per_function: usize,
    pub train_functions: Vec<usize>,
    pub test_functions: Vec<usize>,
}

impl DatasetSplit {
    fn records(&self, functions: &[usize]) -> Vec<usize> {
        let p = self.queries_per_function;
        functions.iter().flat_map(|&f| f * p..(f + 1) * p).collect()
    }

    pub fn train_records(&self) -> Vec<usize> {
        self.records(&self.train_functions)
    }

    pub fn test_records(&self) -> Vec<usize> {
        self.records(&self.test_functions)
    }
}

/// Dense mini-batch: `u`, `v` are `b × m`, `y` is `b × 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub u: Tensor2,
    pub v: Tensor2,
    pub y: Tensor2,
    pub s: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let batch = self.dataset.gather(&self.order[self.next..end]);
        self.next = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.next).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}
