use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed learning curve: {0}")]
    Schema(String),
}

/// One learning-curve row. `update` 0 is the initial policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub update: usize,
    pub noise_free_cost: f64,
    pub mean_batch_cost: f64,
    pub lambda_mean: f64,
    pub lambda_dofs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

impl LearningCurve {
    pub fn dofs(&self) -> usize {
        self.rows.first().map_or(0, |r| r.lambda_dofs.len())
    }

    pub fn header(dofs: usize) -> Vec<String> {
        let mut h: Vec<String> = ["update", "noise_free_cost", "mean_batch_cost", "lambda_mean"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=dofs).map(|d| format!("lambda_dof_{d}")));
        h
    }

    pub fn initial_cost(&self) -> Option<f64> {
        self.rows.first().map(|r| r.noise_free_cost)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.rows.last().map(|r| r.noise_free_cost)
    }

    pub fn final_lambda(&self) -> Option<f64> {
        self.rows.last().map(|r| r.lambda_mean)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), CurveError> {
        let dofs = self.dofs();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(dofs))?;
        for r in &self.rows {
            if r.lambda_dofs.len() != dofs {
                return Err(CurveError::Schema(format!("row {} has {} DOF columns", r.update, r.lambda_dofs.len())));
            }
            let mut rec = vec![
                r.update.to_string(),
                number(r.noise_free_cost),
                number(r.mean_batch_cost),
                number(r.lambda_mean),
            ];
            rec.extend(r.lambda_dofs.iter().map(|&l| number(l)));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn read<R: Read>(input: R) -> Result<Self, CurveError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 4 {
            return Err(CurveError::Schema("fewer than four columns".into()));
        }
        let dofs = header.len() - 4;
        if header.iter().ne(Self::header(dofs).iter().map(String::as_str)) {
            return Err(CurveError::Schema(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let float = |i: usize| -> Result<f64, CurveError> {
                rec[i]
                    .parse()
                    .map_err(|_| CurveError::Schema(format!("bad number {:?}", &rec[i])))
            };
            rows.push(CurveRow {
                update: rec[0]
                    .parse()
                    .map_err(|_| CurveError::Schema(format!("bad update index {:?}", &rec[0])))?,
                noise_free_cost: float(1)?,
                mean_batch_cost: float(2)?,
                lambda_mean: float(3)?,
                lambda_dofs: (4..4 + dofs).map(float).collect::<Result<_, _>>()?,
            });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self, CurveError> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CurveError> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub update: usize,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub lambda_mean: f64,
    pub lambda_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation of the noise-free cost and of the mean
/// exploration magnitude, per update index, over the curves that reach it.
/// A single contributing curve gives a standard deviation of zero.
pub fn aggregate(curves: &[LearningCurve]) -> Vec<AggregateRow> {
    let mut by_update: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for c in curves {
        for r in &c.rows {
            let e = by_update.entry(r.update).or_default();
            e.0.push(r.noise_free_cost);
            e.1.push(r.lambda_mean);
        }
    }
    by_update
        .into_iter()
        .map(|(update, (costs, lambdas))| {
            let (cost_mean, cost_std) = mean_std(&costs);
            let (lambda_mean, lambda_std) = mean_std(&lambdas);
            AggregateRow {
                update,
                cost_mean,
                cost_std,
                lambda_mean,
                lambda_std,
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["update", "cost_mean", "cost_std", "lambda_mean", "lambda_std"])
        .expect("writing to memory");
    for r in rows {
        w.write_record([
            r.update.to_string(),
            number(r.cost_mean),
            number(r.cost_std),
            number(r.lambda_mean),
            number(r.lambda_std),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is ascii")
}

/// File name of replication `r` of experiment `name`.
pub fn replication_file(name: &str, replication: usize) -> String {
    format!("{name}_rep{replication}.csv")
}

/// Splits `name_rep<r>.csv` into `(name, r)`.
pub fn parse_replication_file(file: &str) -> Option<(&str, usize)> {
    let stem = file.strip_suffix(".csv")?;
    let (name, r) = stem.rsplit_once("_rep")?;
    if name.is_empty() || r.is_empty() || !r.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((name, r.parse().ok()?))
}

/// Groups the replication curves in `dir` by experiment name and writes
/// `<name>_aggregate.csv` for each group. Returns the written paths.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<PathBuf>, CurveError> {
    let mut groups: BTreeMap<String, Vec<(usize, PathBuf)>> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        if let Some((name, r)) = parse_replication_file(file) {
            groups.entry(name.to_string()).or_default().push((r, path.clone()));
        }
    }
    let mut written = Vec::new();
    for (name, mut files) in groups {
        files.sort();
        let curves = files
            .iter()
            .map(|(_, p)| LearningCurve::load(p))
            .collect::<Result<Vec<_>, _>>()?;
        let out = dir.join(format!("{name}_aggregate.csv"));
        std::fs::write(&out, aggregate_csv(&aggregate(&curves)))?;
        written.push(out);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(costs: &[f64]) -> LearningCurve {
        LearningCurve {
            rows: costs
                .iter()
                .enumerate()
                .map(|(u, &c)| CurveRow {
                    update: u,
                    noise_free_cost: c,
                    mean_batch_cost: c * 1.5,
                    lambda_mean: 2.0 * c,
                    lambda_dofs: vec![c, 3.0 * c],
                })
                .collect(),
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let c = curve(&[0.1, 1.0 / 3.0, 1e-300, 12345.678901234567]);
        let text = c.to_csv();
        assert!(text.starts_with("update,noise_free_cost,mean_batch_cost,lambda_mean,lambda_dof_1,lambda_dof_2\n"));
        assert_eq!(LearningCurve::read(text.as_bytes()).unwrap(), c);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "update,cost\n0,1\n";
        assert!(LearningCurve::read(text.as_bytes()).is_err());
    }

    #[test]
    fn aggregate_uses_sample_std() {
        let rows = aggregate(&[curve(&[1.0, 2.0]), curve(&[3.0, 2.0])]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].cost_mean, 2.0);
        assert!((rows[0].cost_std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[1].cost_std, 0.0);
        assert_eq!(rows[0].lambda_mean, 4.0);
    }

    #[test]
    fn replication_file_names() {
        assert_eq!(parse_replication_file(&replication_file("fig3_constant", 4)), Some(("fig3_constant", 4)));
        assert_eq!(parse_replication_file("a_rep.csv"), None);
        assert_eq!(parse_replication_file("a_aggregate.csv"), None);
        assert_eq!(parse_replication_file("x_rep2x.csv"), None);
    }
}
