//! Authority scoring and concentration indices.
//!
//! A benchmark's authority blends citations and repository stars on a log
//! scale; its mass is split equally across the distinct institutions (or
//! countries) on the benchmark and summed per entity. The resulting
//! [`AuthorityTable`] feeds Gini, HHI, top-k shares and the rank-stability
//! metrics used to compare weighting variants.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::ingest::BenchmarkRecord;

/// Weight on stars relative to citations.
pub const DEFAULT_BLEND_ALPHA: f64 = 0.25;

/// Entity credited for benchmarks without usable affiliations.
pub const UNKNOWN_ENTITY: &str = "Unknown/unlisted";

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngagementSignals {
    pub citations: u64,
    pub stars: u64,
}

impl From<&BenchmarkRecord> for EngagementSignals {
    fn from(r: &BenchmarkRecord) -> Self {
        EngagementSignals {
            citations: r.citations,
            stars: r.stars,
        }
    }
}

/// `ln(1 + citations) + blend_alpha * ln(1 + stars)`.
pub fn authority_weight(signals: EngagementSignals, blend_alpha: f64) -> f64 {
    debug_assert!(blend_alpha >= 0.0, "blend_alpha must be nonnegative");
    (signals.citations as f64).ln_1p() + blend_alpha * (signals.stars as f64).ln_1p()
}

/// Entity name → nonnegative authority mass, with a cached total.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuthorityTable {
    entries: BTreeMap<String, f64>,
    total: f64,
}

impl AuthorityTable {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (name, mass) in entries {
            let name = name.into();
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::invalid(format!("mass for `{name}` must be finite and >= 0, got {mass}")));
            }
            if map.insert(name.clone(), mass).is_some() {
                return Err(Error::invalid(format!("duplicate entity `{name}`")));
            }
        }
        Ok(Self::from_map(map))
    }

    fn from_map(entries: BTreeMap<String, f64>) -> Self {
        let total = entries.values().sum();
        AuthorityTable { entries, total }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn get(&self, entity: &str) -> Option<f64> {
        self.entries.get(entity).copied()
    }

    pub fn share(&self, entity: &str) -> Option<f64> {
        self.get(entity).map(|m| m / self.total)
    }

    /// Entries in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn masses(&self) -> Vec<f64> {
        self.entries.values().copied().collect()
    }

    /// Entries by mass descending, ties by name ascending.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// Copy of the table with the named entities removed.
    pub fn without(&self, excluded: &[&str]) -> Self {
        Self::from_map(
            self.entries
                .iter()
                .filter(|(k, _)| !excluded.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }

    fn top_names(&self, k: usize) -> Result<Vec<&str>> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if k > self.len() {
            return Err(Error::InsufficientData(format!(
                "top-{k} requested from a table of {} entities",
                self.len()
            )));
        }
        Ok(self.ranked().into_iter().take(k).map(|(n, _)| n).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    Institution,
    Country,
}

/// Age/recency adjustment applied to each benchmark's weight before
/// allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VariantKind {
    Baseline,
    RatePerAge { min_age_years: f64 },
    Windowed { window_years: f64 },
    ExponentialDecay { half_life_years: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVariant {
    pub kind: VariantKind,
    pub reference_date: Option<NaiveDate>,
}

pub const DEFAULT_MIN_AGE_YEARS: f64 = 0.25;

impl RobustnessVariant {
    pub fn baseline() -> Self {
        RobustnessVariant {
            kind: VariantKind::Baseline,
            reference_date: None,
        }
    }

    pub fn rate_per_age(min_age_years: f64, reference_date: NaiveDate) -> Result<Self> {
        Self::new(VariantKind::RatePerAge { min_age_years }, Some(reference_date))
    }

    pub fn windowed(window_years: f64, reference_date: NaiveDate) -> Result<Self> {
        Self::new(VariantKind::Windowed { window_years }, Some(reference_date))
    }

    pub fn decay(half_life_years: f64, reference_date: NaiveDate) -> Result<Self> {
        Self::new(VariantKind::ExponentialDecay { half_life_years }, Some(reference_date))
    }

    pub fn new(kind: VariantKind, reference_date: Option<NaiveDate>) -> Result<Self> {
        let v = RobustnessVariant { kind, reference_date };
        v.validate()?;
        Ok(v)
    }

    /// Assembles a variant from loosely typed parts (CLI flags). Exactly the
    /// parameter required by `kind` must be present.
    pub fn from_parts(
        kind: &str,
        window_years: Option<f64>,
        half_life_years: Option<f64>,
        min_age_years: Option<f64>,
        reference_date: Option<NaiveDate>,
    ) -> Result<Self> {
        let unexpected = |name: &str| Error::invalid(format!("`{name}` does not apply to the {kind} variant"));
        let kind = match kind {
            "baseline" => {
                if window_years.is_some() {
                    return Err(unexpected("window_years"));
                }
                if half_life_years.is_some() {
                    return Err(unexpected("half_life_years"));
                }
                VariantKind::Baseline
            }
            "rate-per-age" => {
                if window_years.is_some() || half_life_years.is_some() {
                    return Err(unexpected("window_years/half_life_years"));
                }
                VariantKind::RatePerAge {
                    min_age_years: min_age_years.unwrap_or(DEFAULT_MIN_AGE_YEARS),
                }
            }
            "windowed" => {
                if half_life_years.is_some() {
                    return Err(unexpected("half_life_years"));
                }
                VariantKind::Windowed {
                    window_years: window_years
                        .ok_or_else(|| Error::invalid("windowed variant requires window_years"))?,
                }
            }
            "decay" | "exponential-decay" => {
                if window_years.is_some() {
                    return Err(unexpected("window_years"));
                }
                VariantKind::ExponentialDecay {
                    half_life_years: half_life_years
                        .ok_or_else(|| Error::invalid("decay variant requires half_life_years"))?,
                }
            }
            other => return Err(Error::invalid(format!("unknown variant `{other}`"))),
        };
        Self::new(kind, reference_date)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_nan() || v <= 0.0 {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            } else {
                Ok(())
            }
        };
        match self.kind {
            VariantKind::Baseline => return Ok(()),
            VariantKind::RatePerAge { min_age_years } => positive("min_age_years", min_age_years)?,
            VariantKind::Windowed { window_years } => positive("window_years", window_years)?,
            VariantKind::ExponentialDecay { half_life_years } => positive("half_life_years", half_life_years)?,
        }
        if self.reference_date.is_none() {
            return Err(Error::invalid("age-adjusted variants require a reference date"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            VariantKind::Baseline => "baseline".to_string(),
            VariantKind::RatePerAge { min_age_years } => format!("rate-per-age(>={min_age_years}y)"),
            VariantKind::Windowed { window_years } => format!("window-{window_years}y"),
            VariantKind::ExponentialDecay { half_life_years } => format!("decay-h{half_life_years}y"),
        }
    }

    fn age_years(&self, release: NaiveDate) -> Result<Option<f64>> {
        match self.reference_date {
            None => Ok(None),
            Some(reference) => {
                let days = (reference - release).num_days();
                if days < 0 {
                    return Err(Error::invalid(format!(
                        "reference date {reference} precedes release date {release}"
                    )));
                }
                Ok(Some(days as f64 / DAYS_PER_YEAR))
            }
        }
    }

    /// Transforms a benchmark's base weight according to its age.
    pub fn adjust(&self, base_weight: f64, release: NaiveDate) -> Result<f64> {
        let age = self.age_years(release)?;
        let age = || age.expect("validated variants carry a reference date");
        Ok(match self.kind {
            VariantKind::Baseline => base_weight,
            VariantKind::RatePerAge { min_age_years } => base_weight / age().max(min_age_years),
            VariantKind::Windowed { window_years } => {
                if age() <= window_years {
                    base_weight
                } else {
                    0.0
                }
            }
            VariantKind::ExponentialDecay { half_life_years } => base_weight * 0.5f64.powf(age() / half_life_years),
        })
    }
}

/// Distinct grouped entities of a record, in first-seen order.
pub fn record_entities(record: &BenchmarkRecord, group_by: GroupBy) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in &record.affiliations {
        let label = match group_by {
            GroupBy::Institution => a.institution.as_str(),
            GroupBy::Country => a.country.as_str(),
        };
        if !label.is_empty() && seen.insert(label) {
            out.push(label);
        }
    }
    out
}

/// Per-benchmark weights after the variant transform, in record order.
pub fn benchmark_weights(
    records: &[BenchmarkRecord],
    variant: &RobustnessVariant,
    blend_alpha: f64,
) -> Result<Vec<f64>> {
    if !(blend_alpha >= 0.0) {
        return Err(Error::invalid(format!("blend_alpha must be >= 0, got {blend_alpha}")));
    }
    records
        .iter()
        .map(|r| variant.adjust(authority_weight(r.into(), blend_alpha), r.release_date))
        .collect()
}

/// Splits each benchmark's weight equally across its distinct entities.
pub fn allocate_authority(
    records: &[BenchmarkRecord],
    variant: &RobustnessVariant,
    blend_alpha: f64,
    group_by: GroupBy,
) -> Result<AuthorityTable> {
    variant.validate()?;
    let weights = benchmark_weights(records, variant, blend_alpha)?;
    allocate_weights(records, &weights, group_by)
}

/// Allocation with externally supplied per-record weights.
pub fn allocate_weights(records: &[BenchmarkRecord], weights: &[f64], group_by: GroupBy) -> Result<AuthorityTable> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no benchmark records".into()));
    }
    if weights.len() != records.len() {
        return Err(Error::invalid("one weight per record is required"));
    }
    let mut entries: BTreeMap<String, f64> = BTreeMap::new();
    for (record, &w) in records.iter().zip(weights) {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::invalid(format!("weight for `{}` must be finite and >= 0", record.id)));
        }
        let entities = record_entities(record, group_by);
        if entities.is_empty() {
            *entries.entry(UNKNOWN_ENTITY.to_string()).or_default() += w;
            continue;
        }
        let part = w / entities.len() as f64;
        for e in entities {
            *entries.entry(e.to_string()).or_default() += part;
        }
    }
    Ok(AuthorityTable::from_map(entries))
}

fn check_nonnegative(values: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!("values must be finite and >= 0, got {v}")));
        }
        sum += v;
    }
    Ok(sum)
}

/// Population Gini coefficient, `Σ_i Σ_j |x_i − x_j| / (2 n Σ x)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    let sum = check_nonnegative(values)?;
    if values.is_empty() || sum <= 0.0 {
        return Err(Error::Undefined("Gini coefficient"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // Sorted form of the pairwise sum: Σ_i (2i − n − 1) x_(i), i 1-based.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * sum)).max(0.0))
}

/// Herfindahl–Hirschman index: sum of squared shares.
pub fn hhi(values: &[f64]) -> Result<f64> {
    let sum = check_nonnegative(values)?;
    if sum <= 0.0 {
        return Err(Error::Undefined("HHI"));
    }
    Ok(values.iter().map(|v| (v / sum).powi(2)).sum())
}

/// The `k` largest shares, ties broken by entity name.
pub fn top_shares(table: &AuthorityTable, k: usize) -> Result<Vec<(String, f64)>> {
    let names = table.top_names(k)?;
    if table.total() <= 0.0 {
        return Err(Error::Undefined("share"));
    }
    Ok(names
        .into_iter()
        .map(|n| (n.to_string(), table.get(n).unwrap() / table.total()))
        .collect())
}

/// Jaccard similarity of the two top-k entity sets.
pub fn jaccard_top_k(a: &AuthorityTable, b: &AuthorityTable, k: usize) -> Result<f64> {
    let sa: BTreeSet<&str> = a.top_names(k)?.into_iter().collect();
    let sb: BTreeSet<&str> = b.top_names(k)?.into_iter().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    Ok(inter as f64 / union as f64)
}

/// Average ranks (1 = largest) of `values`, ties share the mean position.
fn average_ranks_desc(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("rank correlation (constant ranks)"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation over the union of both top-k sets.
///
/// Entities missing from a table are ranked tied at the bottom of the union
/// for that table.
pub fn spearman_top_union(a: &AuthorityTable, b: &AuthorityTable, k: usize) -> Result<f64> {
    let union: BTreeSet<&str> = a.top_names(k)?.into_iter().chain(b.top_names(k)?).collect();
    if union.len() < 2 {
        return Err(Error::InsufficientData("rank correlation needs at least two entities".into()));
    }
    let ranks_in = |t: &AuthorityTable| -> Vec<f64> {
        // Absent entities get -inf so they tie below every present mass.
        let vals: Vec<f64> = union.iter().map(|e| t.get(e).unwrap_or(f64::NEG_INFINITY)).collect();
        average_ranks_desc(&vals)
    };
    pearson(&ranks_in(a), &ranks_in(b))
}

/// Yearly concentration values, years strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSeries {
    points: Vec<(i32, f64)>,
}

impl ConcentrationSeries {
    pub fn new(points: Vec<(i32, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("years must be strictly increasing"));
        }
        if let Some(&(year, v)) = points.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("value {v} for {year} is outside [0, 1]")));
        }
        Ok(ConcentrationSeries { points })
    }

    pub fn points(&self) -> &[(i32, f64)] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// `exp(slope) − 1` of the log-linear fit.
    pub annual_change_rate: f64,
    pub ci95: (f64, f64),
    pub slope: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

impl TrendFit {
    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }
}

/// OLS of `ln(value)` on year with a Student-t 95% interval on the slope.
pub fn trend_fit(series: &ConcentrationSeries) -> Result<TrendFit> {
    let pts = series.points();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "trend fit needs at least 3 points, got {}",
            pts.len()
        )));
    }
    if let Some(&(year, v)) = pts.iter().find(|(_, v)| *v <= 0.0) {
        return Err(Error::invalid(format!("value {v} for {year} is not positive")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|(y, _)| *y as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let df = n - 2.0;
    let stderr = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::invalid(e.to_string()))?
        .inverse_cdf(0.975);
    let to_rate = |s: f64| s.exp() - 1.0;
    Ok(TrendFit {
        annual_change_rate: to_rate(slope),
        ci95: (to_rate(slope - t * stderr), to_rate(slope + t * stderr)),
        slope,
        slope_stderr: stderr,
        n: pts.len(),
    })
}

/// One row of the age/recency robustness comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub variant: String,
    pub gini: f64,
    pub delta_gini: f64,
    pub hhi: f64,
    pub delta_hhi: f64,
    pub spearman: f64,
    pub jaccard: f64,
}

/// Compares each variant against the baseline allocation: Gini and HHI with
/// relative change, Spearman over the top-`k_rank` union and top-`k_set`
/// Jaccard.
pub fn robustness_table(
    records: &[BenchmarkRecord],
    variants: &[RobustnessVariant],
    blend_alpha: f64,
    group_by: GroupBy,
    k_set: usize,
    k_rank: usize,
) -> Result<Vec<RobustnessRow>> {
    let base = allocate_authority(records, &RobustnessVariant::baseline(), blend_alpha, group_by)?;
    let base_gini = gini(&base.masses())?;
    let base_hhi = hhi(&base.masses())?;
    let mut rows = Vec::with_capacity(variants.len() + 1);
    let mut push = |label: String, table: &AuthorityTable| -> Result<()> {
        let g = gini(&table.masses())?;
        let h = hhi(&table.masses())?;
        rows.push(RobustnessRow {
            variant: label,
            gini: g,
            delta_gini: g / base_gini - 1.0,
            hhi: h,
            delta_hhi: h / base_hhi - 1.0,
            spearman: spearman_top_union(&base, table, k_rank.min(table.len()))?,
            jaccard: jaccard_top_k(&base, table, k_set.min(table.len()))?,
        });
        Ok(())
    };
    push(RobustnessVariant::baseline().label(), &base)?;
    for v in variants {
        let t = allocate_authority(records, v, blend_alpha, group_by)?;
        push(v.label(), &t)?;
    }
    Ok(rows)
}
