//! Plumbing behind the `sparsegrad` binary: configuration files, result
//! files and the kernel benchmark.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sparsegrad::experiments::ExperimentResult;
use sparsegrad::kernels::{sp_add, sp_add_vjp, spdmm, spdmm_vjp, spmv, spmv_vjp, spspmm, spspmm_vjp};
use sparsegrad::poisson::poisson_1d;
use sparsegrad::solve::{sptrsv, sptrsv_vjp};
use sparsegrad::{CsrMatrix, DenseMatrix, DenseVector, Triangle};

/// Kernel timed by [`bench`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchOp {
    Spmv,
    Spspmm,
    Spdmm,
    Spadd,
    Sptrsv,
}

impl BenchOp {
    pub const ALL: [BenchOp; 5] = [BenchOp::Spmv, BenchOp::Spspmm, BenchOp::Spdmm, BenchOp::Spadd, BenchOp::Sptrsv];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Spmv => "spmv",
            BenchOp::Spspmm => "spspmm",
            BenchOp::Spdmm => "spdmm",
            BenchOp::Spadd => "spadd",
            BenchOp::Sptrsv => "sptrsv",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .with_context(|| format!("unknown op {s:?}; expected one of spmv, spspmm, spdmm, spadd, sptrsv"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Total wall time of `repetitions` calls of one kernel direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub op: BenchOp,
    pub direction: Direction,
    pub size: usize,
    pub nnz: usize,
    pub repetitions: usize,
    pub seconds: f64,
}

impl BenchRecord {
    pub fn seconds_per_repetition(&self) -> f64 {
        self.seconds / self.repetitions as f64
    }
}

/// Operands for one benchmark size. The sparse operand is `A_N`, or its
/// lower triangle for `sptrsv`.
struct Operands {
    a: CsrMatrix,
    x: DenseVector,
    b: DenseMatrix,
}

impl Operands {
    fn new(op: BenchOp, n: usize) -> Result<Self> {
        let a = poisson_1d(n)?;
        let a = if op == BenchOp::Sptrsv { a.tril(0) } else { a };
        let x = DenseVector::new((0..n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect());
        let b = DenseMatrix::new(n, 4, (0..4 * n).map(|i| (i % 5) as f64 - 2.0).collect())?;
        Ok(Operands { a, x, b })
    }
}

fn time<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<f64> {
    f()?;
    let start = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    // clamp so the record stays valid when the clock resolution is coarse
    Ok(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE))
}

/// Times `reps` forward and `reps` backward calls of `op` on `A_N` for each
/// `N` in `sizes`. Each direction gets one untimed warm-up call; operand
/// construction and the forward output feeding the backward pass are
/// outside the timed loop.
pub fn bench(op: BenchOp, sizes: &[usize], reps: usize) -> Result<Vec<BenchRecord>> {
    ensure!(reps >= 1, "repetitions must be at least 1");
    ensure!(!sizes.is_empty(), "no sizes given");
    let mut records = Vec::with_capacity(2 * sizes.len());
    for &n in sizes {
        let o = Operands::new(op, n)?;
        let (forward, backward) = match op {
            BenchOp::Spmv => {
                let v = spmv(&o.a, &o.x)?;
                (
                    time(reps, || spmv(&o.a, &o.x).map(drop).map_err(Into::into))?,
                    time(reps, || spmv_vjp(&v, &o.a, &o.x).map(drop).map_err(Into::into))?,
                )
            }
            BenchOp::Spspmm => {
                let v = spspmm(&o.a, &o.a)?;
                (
                    time(reps, || spspmm(&o.a, &o.a).map(drop).map_err(Into::into))?,
                    time(reps, || spspmm_vjp(&v, &o.a, &o.a).map(drop).map_err(Into::into))?,
                )
            }
            BenchOp::Spdmm => {
                let v = spdmm(&o.a, &o.b)?;
                (
                    time(reps, || spdmm(&o.a, &o.b).map(drop).map_err(Into::into))?,
                    time(reps, || spdmm_vjp(&v, &o.a, &o.b).map(drop).map_err(Into::into))?,
                )
            }
            BenchOp::Spadd => {
                let shifted = CsrMatrix::eye(n, 1);
                let v = sp_add(2.0, &o.a, -1.0, &shifted)?;
                (
                    time(reps, || sp_add(2.0, &o.a, -1.0, &shifted).map(drop).map_err(Into::into))?,
                    time(reps, || sp_add_vjp(&v, &o.a, &shifted, 2.0, -1.0).map(drop).map_err(Into::into))?,
                )
            }
            BenchOp::Sptrsv => {
                let y = sptrsv(&o.a, &o.x, Triangle::Lower, false)?;
                (
                    time(reps, || sptrsv(&o.a, &o.x, Triangle::Lower, false).map(drop).map_err(Into::into))?,
                    time(reps, || sptrsv_vjp(&o.x, &o.a, &y, Triangle::Lower, false).map(drop).map_err(Into::into))?,
                )
            }
        };
        for (direction, seconds) in [(Direction::Forward, forward), (Direction::Backward, backward)] {
            records.push(BenchRecord {
                op,
                direction,
                size: n,
                nnz: o.a.nnz(),
                repetitions: reps,
                seconds,
            });
        }
    }
    Ok(records)
}

/// Least-squares slope of `log(seconds per repetition)` against `log(nnz)`.
///
/// Needs records of a single op and direction, at least three distinct
/// sizes, and a largest `nnz` at least 100 times the smallest.
///
/// ```
/// use sparsegrad_cli::{scaling_fit, BenchOp, BenchRecord, Direction};
///
/// let records: Vec<BenchRecord> = [1e3, 1e4, 1e5]
///     .iter()
///     .map(|&nnz| BenchRecord {
///         op: BenchOp::Spmv,
///         direction: Direction::Forward,
///         size: nnz as usize,
///         nnz: nnz as usize,
///         repetitions: 1,
///         seconds: 2e-9 * nnz,
///     })
///     .collect();
/// assert!((scaling_fit(&records).unwrap() - 1.0).abs() < 1e-6);
/// ```
pub fn scaling_fit(records: &[BenchRecord]) -> Result<f64> {
    let Some(first) = records.first() else {
        bail!("scaling fit needs at least 3 records, got 0");
    };
    ensure!(
        records.iter().all(|r| r.op == first.op && r.direction == first.direction),
        "scaling fit needs records of one op and direction"
    );
    let mut sizes: Vec<usize> = records.iter().map(|r| r.nnz).collect();
    sizes.sort_unstable();
    sizes.dedup();
    ensure!(sizes.len() >= 3, "scaling fit needs at least 3 distinct sizes, got {}", sizes.len());
    ensure!(sizes[0] > 0, "scaling fit needs nonzero nnz");
    let span = sizes[sizes.len() - 1] as f64 / sizes[0] as f64;
    ensure!(span >= 100.0, "scaling fit needs nnz spanning 2 decades, got a factor of {span:.1}");
    ensure!(
        records.iter().all(|r| r.seconds > 0.0 && r.seconds.is_finite() && r.repetitions >= 1),
        "scaling fit needs positive finite timings"
    );
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| ((r.nnz as f64).ln(), r.seconds_per_repetition().ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Reads a key-value configuration file into `T`. Keys use TOML syntax,
/// `overrides` replace file entries, and unlisted keys keep their defaults.
pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, overrides: toml::Table) -> Result<T> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    table.extend(overrides);
    let what = path.map_or_else(|| "command-line options".to_string(), |p| p.display().to_string());
    toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("invalid configuration in {what}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Per-epoch CSV: `epoch`, `loss`, then one column per epoch series.
/// Shorter columns are padded with empty cells.
pub fn write_history_csv<W: Write>(out: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epoch".to_string(), "loss".to_string()];
    header.extend(result.epoch_series.keys().cloned());
    w.write_record(&header)?;
    let rows = result
        .epoch_series
        .values()
        .map(Vec::len)
        .chain(std::iter::once(result.loss_history.len()))
        .max()
        .unwrap_or(0);
    let cell = |v: Option<&f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
    for i in 0..rows {
        let mut row = vec![i.to_string(), cell(result.loss_history.get(i))];
        row.extend(result.epoch_series.values().map(|s| cell(s.get(i))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format CSV of the non-epoch series: `series,index,value`.
pub fn write_series_csv<W: Write>(out: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "index", "value"])?;
    for (name, values) in &result.series {
        for (i, v) in values.iter().enumerate() {
            w.write_record([name.clone(), i.to_string(), format!("{v:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench_csv<R: std::io::Read>(input: R) -> Result<Vec<BenchRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsegrad::experiments::{run_jacobi_experiment, JacobiConfig};

    fn synthetic(nnz: &[usize], f: impl Fn(f64) -> f64) -> Vec<BenchRecord> {
        nnz.iter()
            .map(|&k| BenchRecord {
                op: BenchOp::Spmv,
                direction: Direction::Forward,
                size: k,
                nnz: k,
                repetitions: 10,
                seconds: 10.0 * f(k as f64),
            })
            .collect()
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let sizes = [1000, 5000, 30_000, 200_000];
        assert!((scaling_fit(&synthetic(&sizes, |k| 3e-9 * k)).unwrap() - 1.0).abs() < 1e-6);
        assert!((scaling_fit(&synthetic(&sizes, |k| 1e-12 * k * k)).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fit_rejects_thin_data() {
        assert!(scaling_fit(&[]).is_err());
        assert!(scaling_fit(&synthetic(&[100, 200_000], |k| k)).is_err());
        assert!(scaling_fit(&synthetic(&[100, 500, 9000], |k| k)).is_err());
        let mut mixed = synthetic(&[100, 10_000, 1_000_000], |k| k);
        mixed[1].direction = Direction::Backward;
        assert!(scaling_fit(&mixed).is_err());
    }

    #[test]
    fn bench_emits_both_directions_per_size() {
        for op in BenchOp::ALL {
            let records = bench(op, &[16, 64, 256], 2).unwrap();
            assert_eq!(records.len(), 6);
            assert!(records.iter().all(|r| r.seconds > 0.0 && r.repetitions == 2));
            assert_eq!(records[0].direction, Direction::Forward);
            assert_eq!(records[1].direction, Direction::Backward);
        }
        assert!(bench(BenchOp::Spmv, &[8], 0).is_err());
    }

    #[test]
    fn bench_csv_round_trip() {
        let records = bench(BenchOp::Spadd, &[10, 20], 1).unwrap();
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &records).unwrap();
        assert_eq!(read_bench_csv(buf.as_slice()).unwrap(), records);
        assert!(String::from_utf8(buf).unwrap().starts_with("op,direction,size,nnz,repetitions,seconds\n"));
    }

    #[test]
    fn op_names_parse() {
        for op in BenchOp::ALL {
            assert_eq!(op.name().parse::<BenchOp>().unwrap(), op);
        }
        assert!("spmm".parse::<BenchOp>().is_err());
    }

    #[test]
    fn config_overrides_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jacobi.toml");
        fs::write(&path, "n = 8\nepochs = 5\n").unwrap();
        let mut over = toml::Table::new();
        over.insert("epochs".into(), toml::Value::Integer(7));
        let c: JacobiConfig = load_config(Some(&path), over).unwrap();
        assert_eq!((c.n, c.epochs, c.lr), (8, 7, 1e-2));
        fs::write(&path, "gamma = 0.5\n").unwrap();
        let err = load_config::<JacobiConfig>(Some(&path), toml::Table::new()).unwrap_err();
        assert!(format!("{err:#}").contains("gamma"));
    }

    #[test]
    fn results_parse_back_losslessly() {
        let r = run_jacobi_experiment(&JacobiConfig {
            epochs: 3,
            ..JacobiConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(&path, &r).unwrap();
        let back: ExperimentResult = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, r);

        let mut buf = Vec::new();
        write_history_csv(&mut buf, &r).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let losses: Vec<f64> = reader.records().map(|row| row.unwrap()[1].parse().unwrap()).collect();
        assert_eq!(losses, r.loss_history);
    }
}
