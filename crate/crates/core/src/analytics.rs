//! Yearly ecosystem indicators, PCA, and country-level Pareto analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{year_of, BenchmarkRecord, LicenseClass, ModelRecord, WeightsAccess, UNKNOWN_COUNTRY};
use crate::metrics::{self, GroupBy, RobustnessVariant};

pub const INDICATOR_NAMES: [&str; 8] = [
    "model_count",
    "mean_log10_params",
    "distinct_manufacturers",
    "distinct_countries",
    "mean_modalities",
    "share_documented",
    "share_open_weights",
    "share_permissive_license",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyIndicators {
    pub years: Vec<i32>,
    pub metric_names: Vec<String>,
    /// Per-year values before standardization (imputed where needed).
    pub raw: Vec<Vec<f64>>,
    /// Z-scored columns, population standard deviation.
    pub metrics: Vec<Vec<f64>>,
}

fn raw_indicators(models: &[&ModelRecord]) -> [f64; 8] {
    let n = models.len() as f64;
    let logs: Vec<f64> = models
        .iter()
        .filter_map(|m| m.parameter_count)
        .map(|p| (p as f64).log10())
        .collect();
    let mean_log = if logs.is_empty() {
        f64::NAN
    } else {
        logs.iter().sum::<f64>() / logs.len() as f64
    };
    let manufacturers: BTreeSet<&str> = models
        .iter()
        .map(|m| m.manufacturer.as_str())
        .filter(|s| !s.is_empty())
        .collect();
    let countries: BTreeSet<&str> = models
        .iter()
        .map(|m| m.country.as_str())
        .filter(|s| !s.is_empty() && *s != UNKNOWN_COUNTRY)
        .collect();
    let share = |f: &dyn Fn(&ModelRecord) -> bool| models.iter().filter(|m| f(m)).count() as f64 / n;
    [
        n,
        mean_log,
        manufacturers.len() as f64,
        countries.len() as f64,
        models.iter().map(|m| m.modalities.len() as f64).sum::<f64>() / n,
        share(&|m| m.documented),
        share(&|m| m.weights_access == WeightsAccess::Open),
        share(&|m| m.license_class == LicenseClass::Permissive),
    ]
}

/// Z-scores each column with the population standard deviation.
pub fn zscore_columns(rows: &[Vec<f64>], names: &[String]) -> Result<Vec<Vec<f64>>> {
    let n = rows.len() as f64;
    let mut out = rows.to_vec();
    for (c, name) in names.iter().enumerate() {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance { column: name.clone() });
        }
        for r in out.iter_mut() {
            r[c] = (r[c] - mean) / sd;
        }
    }
    Ok(out)
}

/// Builds the eight yearly indicators and z-scores them. Years where no
/// model reports a parameter count take the mean of the other years.
pub fn derive_indicators(models: &[ModelRecord]) -> Result<YearlyIndicators> {
    if models.is_empty() {
        return Err(Error::InsufficientData("no model records".into()));
    }
    let mut by_year: BTreeMap<i32, Vec<&ModelRecord>> = BTreeMap::new();
    for m in models {
        by_year.entry(year_of(m.release_date)).or_default().push(m);
    }
    let years: Vec<i32> = by_year.keys().copied().collect();
    let mut raw: Vec<Vec<f64>> = by_year.values().map(|ms| raw_indicators(ms).to_vec()).collect();

    let reported: Vec<f64> = raw.iter().map(|r| r[1]).filter(|v| !v.is_nan()).collect();
    if reported.is_empty() {
        return Err(Error::InsufficientData("no model reports a parameter count".into()));
    }
    let fill = reported.iter().sum::<f64>() / reported.len() as f64;
    for r in raw.iter_mut().filter(|r| r[1].is_nan()) {
        r[1] = fill;
    }

    let metric_names: Vec<String> = INDICATOR_NAMES.iter().map(|s| s.to_string()).collect();
    let metrics = zscore_columns(&raw, &metric_names)?;
    Ok(YearlyIndicators {
        years,
        metric_names,
        raw,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub metric_names: Vec<String>,
    /// One unit-norm loading vector per retained component.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    /// Every eigenvalue of the covariance matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Row coordinates on the retained components.
    pub scores: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
}

impl PcaResult {
    /// Maps scores back to the input space.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        self.scores
            .iter()
            .map(|s| {
                (0..self.column_means.len())
                    .map(|j| {
                        self.column_means[j]
                            + s.iter().zip(&self.components).map(|(v, c)| v * c[j]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn pca(indicators: &YearlyIndicators, n_components: usize) -> Result<PcaResult> {
    pca_matrix(&indicators.metrics, &indicators.metric_names, n_components)
}

/// PCA by eigen-decomposition of the column covariance matrix. Each loading
/// vector is signed so that its largest-magnitude entry is positive.
pub fn pca_matrix(rows: &[Vec<f64>], names: &[String], n_components: usize) -> Result<PcaResult> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 rows, got {n}")));
    }
    let p = names.len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid(format!("every row must have {p} columns")));
    }
    if n_components == 0 || n_components > p || n_components > n {
        return Err(Error::invalid(format!(
            "n_components must lie in 1..={} (columns {p}, rows {n})",
            p.min(n)
        )));
    }
    let column_means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| rows[i][j] - column_means[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Undefined("explained variance (constant data)"));
    }

    let components: Vec<Vec<f64>> = order[..n_components]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let scores = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| (0..p).map(|j| centered[(i, j)] * c[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult {
        metric_names: names.to_vec(),
        explained_variance_ratio: eigenvalues[..n_components].iter().map(|l| l / total).collect(),
        components,
        eigenvalues,
        scores,
        column_means,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub country: String,
    pub count: f64,
    pub cumulative_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryPareto {
    pub rows: Vec<ParetoRow>,
    pub gini: f64,
}

/// Fractional benchmark counts per country (1/n per distinct country on a
/// benchmark), sorted descending with cumulative shares.
pub fn country_pareto(records: &[BenchmarkRecord]) -> Result<CountryPareto> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no benchmark records".into()));
    }
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for r in records {
        let countries = metrics::record_entities(r, GroupBy::Country);
        if countries.is_empty() {
            *counts.entry(UNKNOWN_COUNTRY.to_string()).or_default() += 1.0;
        } else {
            let part = 1.0 / countries.len() as f64;
            for c in countries {
                *counts.entry(c.to_string()).or_default() += part;
            }
        }
    }
    let mut sorted: Vec<(String, f64)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total: f64 = sorted.iter().map(|(_, c)| c).sum();
    let gini = metrics::gini(&sorted.iter().map(|(_, c)| *c).collect::<Vec<_>>())?;
    let mut running = 0.0;
    let last = sorted.len() - 1;
    let rows = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (country, count))| {
            running += count;
            ParetoRow {
                country,
                count,
                cumulative_share: if i == last { 1.0 } else { running / total },
            }
        })
        .collect();
    Ok(CountryPareto { rows, gini })
}

/// One year's concentration of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearConcentration {
    pub year: i32,
    pub hhi: f64,
    pub gini: Option<f64>,
    pub entities: usize,
}

/// Institutional authority concentration among the benchmarks released in
/// each year.
pub fn yearly_authority_concentration(
    records: &[BenchmarkRecord],
    blend_alpha: f64,
    group_by: GroupBy,
) -> Result<Vec<YearConcentration>> {
    let mut by_year: BTreeMap<i32, Vec<BenchmarkRecord>> = BTreeMap::new();
    for r in records {
        by_year.entry(year_of(r.release_date)).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (year, recs) in by_year {
        let table = metrics::allocate_authority(&recs, &RobustnessVariant::baseline(), blend_alpha, group_by)?;
        let masses = table.masses();
        // a year whose benchmarks all have zero engagement has no shares
        let Ok(hhi) = metrics::hhi(&masses) else { continue };
        out.push(YearConcentration {
            year,
            hhi,
            gini: metrics::gini(&masses).ok().filter(|_| masses.len() > 1),
            entities: masses.len(),
        });
    }
    Ok(out)
}

/// Manufacturer concentration of model releases per year.
pub fn yearly_model_concentration(models: &[ModelRecord]) -> Result<Vec<YearConcentration>> {
    let mut by_year: BTreeMap<i32, BTreeMap<&str, f64>> = BTreeMap::new();
    for m in models {
        *by_year
            .entry(year_of(m.release_date))
            .or_default()
            .entry(m.manufacturer.as_str())
            .or_default() += 1.0;
    }
    by_year
        .into_iter()
        .map(|(year, counts)| {
            let v: Vec<f64> = counts.values().copied().collect();
            Ok(YearConcentration {
                year,
                hhi: metrics::hhi(&v)?,
                gini: metrics::gini(&v).ok().filter(|_| v.len() > 1),
                entities: v.len(),
            })
        })
        .collect()
}

pub fn write_indicators_csv<W: Write>(ind: &YearlyIndicators, zscored: bool, mut w: W) -> Result<()> {
    let io = |e| Error::io("<indicators>", e);
    writeln!(w, "year,{}", ind.metric_names.join(",")).map_err(io)?;
    let rows = if zscored { &ind.metrics } else { &ind.raw };
    for (year, row) in ind.years.iter().zip(rows) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{year},{}", cells.join(",")).map_err(io)?;
    }
    Ok(())
}

/// Long form `component,metric,loading`, components numbered from 1.
pub fn write_loadings_csv<W: Write>(pca: &PcaResult, mut w: W) -> Result<()> {
    let io = |e| Error::io("<loadings>", e);
    writeln!(w, "component,metric,loading").map_err(io)?;
    for (k, comp) in pca.components.iter().enumerate() {
        for (name, v) in pca.metric_names.iter().zip(comp) {
            writeln!(w, "{},{name},{v}", k + 1).map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_scores_csv<W: Write>(pca: &PcaResult, years: &[i32], mut w: W) -> Result<()> {
    let io = |e| Error::io("<scores>", e);
    let header: Vec<String> = (1..=pca.components.len()).map(|k| format!("pc{k}")).collect();
    writeln!(w, "year,{}", header.join(",")).map_err(io)?;
    for (year, s) in years.iter().zip(&pca.scores) {
        let cells: Vec<String> = s.iter().map(f64::to_string).collect();
        writeln!(w, "{year},{}", cells.join(",")).map_err(io)?;
    }
    Ok(())
}

pub fn write_pareto_csv<W: Write>(pareto: &CountryPareto, mut w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut w);
    out.write_record(["country", "count", "cumulative_share"])?;
    for r in &pareto.rows {
        out.write_record([r.country.clone(), r.count.to_string(), r.cumulative_share.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<pareto>", e))?;
    Ok(())
}
