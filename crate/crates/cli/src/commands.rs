use std::io::Write;

use anyhow::{bail, Context, Result};
use benchconc::abm::{self, SimConfig};
use benchconc::analytics::{self, YearConcentration};
use benchconc::graph::{self, EcoNode, NodeKind, NodeScores, TripartiteGraph};
use benchconc::ingest::{self, AliasTable, BenchmarkRecord, LoadOptions, ModelRecord, SnapshotFormat};
use benchconc::metrics::{self, AuthorityTable, ConcentrationSeries, GroupBy, RobustnessVariant};
use benchconc::sweep::{self, SweepGrid};
use benchconc::Error;
use chrono::NaiveDate;
use serde_json::{json, Value};

use crate::args::*;
use crate::Session;

fn load_options(snapshot_date: Option<NaiveDate>) -> LoadOptions {
    LoadOptions {
        snapshot_date,
        ..LoadOptions::default()
    }
}

fn load_aliases(path: Option<&std::path::Path>) -> Result<AliasTable> {
    match path {
        Some(p) => Ok(AliasTable::load(p)?),
        None => Ok(AliasTable::default()),
    }
}

fn load_benchmark_records(
    benchmarks: &std::path::Path,
    affiliations: Option<&std::path::Path>,
    aliases: &AliasTable,
    snapshot_date: Option<NaiveDate>,
    format: SnapshotFormat,
    session: &mut Session,
) -> Result<Vec<BenchmarkRecord>> {
    let loaded = ingest::load_benchmarks(benchmarks, affiliations, format, &load_options(snapshot_date))?;
    session.record_manifest(loaded.manifest);
    if let Some(m) = loaded.affiliations_manifest {
        session.record_manifest(m);
    }
    Ok(ingest::dedupe_entities(&loaded.records, aliases))
}

fn load_model_records(
    path: &std::path::Path,
    aliases: &AliasTable,
    snapshot_date: Option<NaiveDate>,
    format: SnapshotFormat,
    session: &mut Session,
) -> Result<Vec<ModelRecord>> {
    let loaded = ingest::load_models(path, format, &load_options(snapshot_date))?;
    session.record_manifest(loaded.manifest);
    Ok(ingest::dedupe_models(&loaded.records, aliases))
}

fn benchmark_input(input: &BenchmarkInput, format: InputFormat, session: &mut Session) -> Result<Vec<BenchmarkRecord>> {
    let aliases = load_aliases(input.aliases.as_deref())?;
    let records = load_benchmark_records(
        &input.benchmarks,
        input.affiliations.as_deref(),
        &aliases,
        input.snapshot_date,
        format.into(),
        session,
    )?;
    if records.is_empty() {
        bail!("{} contains no benchmark records", input.benchmarks.display());
    }
    Ok(records)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> benchconc::Result<()> {
    w.flush().map_err(|e| Error::Csv(e.into()))
}

fn write_authority_csv<W: Write>(table: &AuthorityTable, w: W) -> benchconc::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["entity", "mass", "share", "rank"])?;
    for (rank, (name, mass)) in table.ranked().into_iter().enumerate() {
        let share = if table.total() > 0.0 { mass / table.total() } else { 0.0 };
        out.write_record([name.to_string(), mass.to_string(), share.to_string(), (rank + 1).to_string()])?;
    }
    flush(out)
}

/// Concentration summary of one table; undefined indices become null.
fn table_summary(table: &AuthorityTable, top_k: usize, session: &mut Session) -> Value {
    let masses = table.masses();
    let gini = if table.len() < 2 {
        session.warn(format!("only {} entity; Gini is undefined", table.len()));
        None
    } else {
        match metrics::gini(&masses) {
            Ok(g) => Some(g),
            Err(e) => {
                session.warn(format!("Gini: {e}"));
                None
            }
        }
    };
    let hhi = metrics::hhi(&masses).ok();
    let top = metrics::top_shares(table, top_k.min(table.len())).unwrap_or_default();
    let top3: f64 = top.iter().take(3).map(|(_, s)| s).sum();
    json!({
        "entities": table.len(),
        "total_mass": table.total(),
        "gini": gini,
        "hhi": hhi,
        "top3_cumulative_share": top3,
        "top_shares": top.iter().map(|(n, s)| json!({"entity": n, "share": s})).collect::<Vec<_>>(),
    })
}

fn latest_release(records: &[BenchmarkRecord]) -> NaiveDate {
    records.iter().map(|r| r.release_date).max().expect("records are nonempty")
}

/// The variant set compared in the robustness table.
fn standard_variants(min_age: f64, reference: NaiveDate) -> benchconc::Result<Vec<RobustnessVariant>> {
    let mut v = vec![RobustnessVariant::rate_per_age(min_age, reference)?];
    for w in [1.0, 2.0, 3.0] {
        v.push(RobustnessVariant::windowed(w, reference)?);
    }
    for h in [1.0, 2.0, 3.0, 5.0] {
        v.push(RobustnessVariant::decay(h, reference)?);
    }
    Ok(v)
}

pub(crate) fn authority(cli: &Cli, a: &AuthorityArgs, session: &mut Session) -> Result<Value> {
    if a.blend_alpha.is_empty() {
        bail!(Error::InvalidParameter("at least one --alpha is required".into()));
    }
    if a.top_k == 0 || a.rank_k == 0 {
        bail!(Error::InvalidParameter("--top-k and --rank-k must be positive".into()));
    }
    let records = benchmark_input(&a.input, cli.format, session)?;
    let group_by: GroupBy = a.group_by.into();
    let reference = a
        .reference_date
        .or(a.input.snapshot_date)
        .unwrap_or_else(|| latest_release(&records));
    let variant = match a.variant {
        VariantArg::Baseline => {
            RobustnessVariant::from_parts("baseline", a.window_years, a.half_life_years, None, None)?
        }
        kind => RobustnessVariant::from_parts(
            kind.as_str(),
            a.window_years,
            a.half_life_years,
            Some(a.min_age_years),
            Some(reference),
        )?,
    };
    let excluded: Vec<&str> = a.exclude.iter().map(String::as_str).collect();

    let mut tables = Vec::with_capacity(a.blend_alpha.len());
    for &alpha in &a.blend_alpha {
        let table = metrics::allocate_authority(&records, &variant, alpha, group_by)?.without(&excluded);
        if table.is_empty() {
            bail!("no entities remain after exclusions");
        }
        tables.push((alpha, table));
    }

    session.write("authority.csv", |w| write_authority_csv(&tables[0].1, w))?;
    let mut summary = json!({
        "command": "authority",
        "records": records.len(),
        "variant": variant.label(),
        "reference_date": reference.to_string(),
        "group_by": a.group_by,
        "blend_alpha": tables[0].0,
        "summary": table_summary(&tables[0].1, a.top_k, session),
    });

    if tables.len() > 1 {
        let (base_alpha, base) = &tables[0];
        let mut rows = Vec::new();
        for (i, (alpha, table)) in tables.iter().enumerate() {
            session.write(&format!("authority_alpha_{alpha}.csv"), |w| write_authority_csv(table, w))?;
            let k = a.top_k.min(base.len()).min(table.len());
            let kr = a.rank_k.min(base.len()).min(table.len());
            rows.push(json!({
                "alpha": alpha,
                "reference_alpha": base_alpha,
                "hhi": metrics::hhi(&table.masses()).ok(),
                "gini": metrics::gini(&table.masses()).ok().filter(|_| table.len() > 1),
                "jaccard": if i == 0 { Some(1.0) } else { metrics::jaccard_top_k(base, table, k).ok() },
                "spearman": if i == 0 { Some(1.0) } else { metrics::spearman_top_union(base, table, kr).ok() },
            }));
        }
        session.write("stability.csv", |w| {
            let mut out = csv_writer(w);
            out.write_record(["alpha", "reference_alpha", "hhi", "gini", "jaccard", "spearman"])?;
            for r in &rows {
                let cell = |key: &str| match &r[key] {
                    Value::Null => String::new(),
                    v => v.to_string(),
                };
                out.write_record(["alpha", "reference_alpha", "hhi", "gini", "jaccard", "spearman"].map(cell))?;
            }
            flush(out)
        })?;
        summary["ablation"] = Value::Array(rows);
    }

    if a.robustness {
        let variants = standard_variants(a.min_age_years, reference)?;
        let rows = metrics::robustness_table(&records, &variants, tables[0].0, group_by, a.top_k, a.rank_k)?;
        session.write("robustness.csv", |w| {
            let mut out = csv_writer(w);
            out.write_record(["variant", "gini", "delta_gini", "hhi", "delta_hhi", "spearman", "jaccard"])?;
            for r in &rows {
                out.write_record([
                    r.variant.clone(),
                    r.gini.to_string(),
                    r.delta_gini.to_string(),
                    r.hhi.to_string(),
                    r.delta_hhi.to_string(),
                    r.spearman.to_string(),
                    r.jaccard.to_string(),
                ])?;
            }
            flush(out)
        })?;
        summary["robustness"] = serde_json::to_value(&rows)?;
    }
    Ok(summary)
}

fn to_kind(k: KindArg) -> NodeKind {
    match k {
        KindArg::Benchmark => NodeKind::Benchmark,
        KindArg::Author => NodeKind::Author,
        KindArg::Institution => NodeKind::Institution,
    }
}

/// Nodes ordered by score descending, then by (kind, label).
fn by_score<'a>(g: &'a TripartiteGraph, scores: &NodeScores) -> Vec<(&'a EcoNode, f64)> {
    let mut v: Vec<(&EcoNode, f64)> = g.nodes().iter().map(|n| (n, scores[&n.id])).collect();
    v.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.kind.cmp(&b.0.kind))
            .then_with(|| a.0.label.cmp(&b.0.label))
    });
    v
}

fn write_scores<W: Write>(g: &TripartiteGraph, scores: &[(&EcoNode, f64)], column: &str, w: W) -> benchconc::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["kind", "label", "degree", column])?;
    for (n, s) in scores {
        out.write_record([
            n.kind.as_str().to_string(),
            n.label.clone(),
            g.degree(n.id).unwrap_or(0).to_string(),
            s.to_string(),
        ])?;
    }
    flush(out)
}

pub(crate) fn graph(cli: &Cli, a: &GraphArgs, session: &mut Session) -> Result<Value> {
    if a.k_core == 0 {
        bail!(Error::InvalidParameter("--k-core must be at least 1".into()));
    }
    let records = benchmark_input(&a.input, cli.format, session)?;
    let g = graph::build_graph(&records)?;
    let dc = graph::degree_centrality(&g)?;
    let ranked = by_score(&g, &dc);
    session.write("degree_centrality.csv", |w| write_scores(&g, &ranked, "degree_centrality", w))?;

    let core = graph::k_core(&g, a.k_core)?;
    if core.node_count() == 0 {
        session.warn(format!("the {}-core is empty", a.k_core));
    }
    let bc = graph::betweenness(&core);
    let core_ranked = by_score(&core, &bc);
    session.write("kcore_betweenness.csv", |w| write_scores(&core, &core_ranked, "betweenness", w))?;
    session.write("edges.tsv", |w| graph::write_edge_list(&g, w))?;

    let kinds: Vec<NodeKind> = a.gini_kinds.iter().copied().map(to_kind).collect();
    let degree_gini = match graph::degree_gini(&g, (!kinds.is_empty()).then_some(kinds.as_slice())) {
        Ok(v) => Some(v),
        Err(e) => {
            session.warn(format!("degree Gini: {e}"));
            None
        }
    };
    let count = |kind: NodeKind| g.nodes().iter().filter(|n| n.kind == kind).count();
    let top = |v: &[(&EcoNode, f64)]| -> Vec<Value> {
        v.iter()
            .take(a.top)
            .map(|(n, s)| json!({"kind": n.kind.as_str(), "label": n.label, "score": s}))
            .collect()
    };
    Ok(json!({
        "command": "graph",
        "records": records.len(),
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "nodes_by_kind": {
            "benchmark": count(NodeKind::Benchmark),
            "author": count(NodeKind::Author),
            "institution": count(NodeKind::Institution),
        },
        "degree_gini": degree_gini,
        "k_core": a.k_core,
        "core_nodes": core.node_count(),
        "core_edges": core.edge_count(),
        "top_degree_centrality": top(&ranked),
        "top_betweenness": top(&core_ranked),
    }))
}

fn base_config(m: &ModelArgs, seed: u64) -> SimConfig {
    SimConfig {
        matthew_alpha: m.alpha,
        decay_delta: m.delta,
        steps: m.steps,
        initial_benchmarks: m.initial,
        decay_law: m.decay_law.into(),
        seed,
        ..SimConfig::default()
    }
}

pub(crate) fn simulate(cli: &Cli, a: &SimulateArgs, session: &mut Session) -> Result<Value> {
    let config = SimConfig {
        overfit_beta: a.beta,
        entry_gamma: a.gamma,
        ..base_config(&a.model, cli.seed)
    };
    let traj = abm::run(&config)?;
    let steady = abm::steady_state_hhi(&traj, a.model.tail_fraction)?;
    session.write("trajectory.csv", |w| abm::write_trajectory_csv(&traj, w))?;
    session.write("config.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &config)?;
        writeln!(w).map_err(|e| Error::io("config.json", e))
    })?;
    Ok(json!({
        "command": "simulate",
        "config": config,
        "tail_fraction": a.model.tail_fraction,
        "steady_state_hhi": steady,
        "final_hhi": traj.hhi_per_step.last(),
        "final_benchmarks": traj.final_state.len(),
        "entry_events": traj.entry_events,
    }))
}

pub(crate) fn sweep(cli: &Cli, a: &SweepArgs, session: &mut Session) -> Result<Value> {
    if a.beta_count == 0 || a.gamma_count == 0 {
        bail!(Error::InvalidParameter("axis counts must be positive".into()));
    }
    if !(a.gamma_min > 0.0 && a.gamma_max >= a.gamma_min) {
        bail!(Error::InvalidParameter("need 0 < --gamma-min <= --gamma-max".into()));
    }
    let mut gammas = sweep::logspace(a.gamma_min, a.gamma_max, a.gamma_count);
    if a.zero_gamma {
        gammas.insert(0, 0.0);
    }
    let mut grid = SweepGrid::new(
        sweep::linspace(a.beta_min, a.beta_max, a.beta_count),
        gammas,
        a.replicates,
        base_config(&a.model, cli.seed),
    )?;
    grid.tail_fraction = a.model.tail_fraction;
    grid.validate()?;

    let diagram = if a.jobs == 0 {
        sweep::run_sweep(&grid)?
    } else {
        sweep::run_sweep_with_jobs(&grid, a.jobs)?
    };
    let contour = sweep::tipping_contour(&diagram, a.level);
    session.write("phase.csv", |w| sweep::write_phase_csv(&diagram, w))?;
    session.write("tipping.csv", |w| sweep::write_contour_csv(&contour, w))?;

    let sensitivity = match sweep::beta_sensitivity(&diagram, a.level) {
        Ok(v) => Some(v),
        Err(e) => {
            session.warn(format!("beta sensitivity: {e}"));
            None
        }
    };
    let gamma_stars: Vec<f64> = contour.points.iter().map(|p| p.1).collect();
    let rows: Vec<Value> = grid
        .beta_values
        .iter()
        .map(|&b| json!({"beta": b, "gamma_star": contour.crossings_for(b)}))
        .collect();
    Ok(json!({
        "command": "sweep",
        "beta_values": grid.beta_values.len(),
        "gamma_values": grid.gamma_values.len(),
        "replicates": grid.replicates,
        "level": a.level,
        "contour_points": contour.points.len(),
        "gamma_star_min": gamma_stars.iter().copied().reduce(f64::min),
        "gamma_star_max": gamma_stars.iter().copied().reduce(f64::max),
        "beta_sensitivity": sensitivity,
        "crossings": rows,
    }))
}

/// Trend fit of one yearly series, or null with a warning.
fn fit_series(name: &str, points: Vec<(i32, f64)>, session: &mut Session) -> Value {
    let fit = ConcentrationSeries::new(points).and_then(|s| metrics::trend_fit(&s));
    match fit {
        Ok(f) => json!({
            "annual_change_rate": f.annual_change_rate,
            "ci95": [f.ci95.0, f.ci95.1],
            "points": f.n,
        }),
        Err(e) => {
            session.warn(format!("trend fit for {name}: {e}"));
            Value::Null
        }
    }
}

fn series_trends(prefix: &str, series: &[YearConcentration], session: &mut Session) -> (String, Value) {
    let hhi: Vec<(i32, f64)> = series.iter().map(|y| (y.year, y.hhi)).collect();
    let gini: Vec<(i32, f64)> = series.iter().filter_map(|y| y.gini.map(|g| (y.year, g))).collect();
    let value = json!({
        "hhi": fit_series(&format!("{prefix} HHI"), hhi, session),
        "gini": fit_series(&format!("{prefix} Gini"), gini, session),
    });
    (prefix.to_string(), value)
}

pub(crate) fn analytics(cli: &Cli, a: &AnalyticsArgs, session: &mut Session) -> Result<Value> {
    if a.components == 0 {
        bail!(Error::InvalidParameter("--components must be positive".into()));
    }
    let aliases = load_aliases(a.aliases.as_deref())?;
    let models = load_model_records(&a.models, &aliases, a.snapshot_date, cli.format.into(), session)?;
    let indicators = analytics::derive_indicators(&models)?;
    let k = a.components.min(indicators.years.len()).min(indicators.metric_names.len());
    if k < a.components {
        session.warn(format!("retaining {k} components (only {} years)", indicators.years.len()));
    }
    let pca = analytics::pca(&indicators, k)?;
    session.write("indicators.csv", |w| analytics::write_indicators_csv(&indicators, true, w))?;
    session.write("indicators_raw.csv", |w| analytics::write_indicators_csv(&indicators, false, w))?;
    session.write("pca_loadings.csv", |w| analytics::write_loadings_csv(&pca, w))?;
    session.write("pca_scores.csv", |w| analytics::write_scores_csv(&pca, &indicators.years, w))?;

    let mut yearly: Vec<(&str, Vec<YearConcentration>)> =
        vec![("model_manufacturer", analytics::yearly_model_concentration(&models)?)];
    let mut pareto_summary = Value::Null;
    if let Some(path) = &a.benchmarks {
        let records = load_benchmark_records(
            path,
            a.affiliations.as_deref(),
            &aliases,
            a.snapshot_date,
            cli.format.into(),
            session,
        )?;
        if records.is_empty() {
            bail!("{} contains no benchmark records", path.display());
        }
        let pareto = analytics::country_pareto(&records)?;
        session.write("country_pareto.csv", |w| analytics::write_pareto_csv(&pareto, w))?;
        let top3 = pareto.rows.iter().take(3).next_back().map(|r| r.cumulative_share);
        pareto_summary = json!({
            "countries": pareto.rows.len(),
            "gini": pareto.gini,
            "top3_cumulative_share": top3,
        });
        yearly.push((
            "benchmark_authority",
            analytics::yearly_authority_concentration(&records, a.blend_alpha, GroupBy::Institution)?,
        ));
    }

    session.write("yearly_concentration.csv", |w| {
        let mut out = csv_writer(w);
        out.write_record(["series", "year", "hhi", "gini", "entities"])?;
        for (name, series) in &yearly {
            for y in series {
                out.write_record([
                    name.to_string(),
                    y.year.to_string(),
                    y.hhi.to_string(),
                    y.gini.map(|g| g.to_string()).unwrap_or_default(),
                    y.entities.to_string(),
                ])?;
            }
        }
        flush(out)
    })?;
    let mut trends = serde_json::Map::new();
    for (name, series) in &yearly {
        let (key, value) = series_trends(name, series, session);
        trends.insert(key, value);
    }

    let ratios = &pca.explained_variance_ratio;
    Ok(json!({
        "command": "analytics",
        "models": models.len(),
        "years": indicators.years,
        "components": k,
        "explained_variance_ratio": ratios,
        "top2_explained": ratios.iter().take(2).sum::<f64>(),
        "country_pareto": pareto_summary,
        "trends": trends,
    }))
}

pub(crate) fn validate(cli: &Cli, a: &ValidateArgs, session: &mut Session) -> Result<Value> {
    if a.models.is_none() && a.benchmarks.is_none() && a.aliases.is_none() {
        bail!(Error::InvalidParameter("nothing to validate: pass --models, --benchmarks or --aliases".into()));
    }
    let aliases = load_aliases(a.aliases.as_deref())?;
    let mut counts = serde_json::Map::new();
    if let Some(p) = &a.models {
        let models = load_model_records(p, &aliases, a.snapshot_date, cli.format.into(), session)?;
        counts.insert("models".into(), json!(models.len()));
    }
    if let Some(p) = &a.benchmarks {
        let records =
            load_benchmark_records(p, a.affiliations.as_deref(), &aliases, a.snapshot_date, cli.format.into(), session)?;
        let unknown = records.iter().filter(|r| r.affiliations.is_empty()).count();
        counts.insert("benchmarks".into(), json!(records.len()));
        counts.insert("benchmarks_without_affiliations".into(), json!(unknown));
    }
    for m in &session.manifests {
        let ok = m.verify().with_context(|| format!("re-reading {}", m.path.display()))?;
        if !ok {
            bail!("{} changed while it was being validated", m.path.display());
        }
    }
    Ok(json!({
        "command": "validate",
        "valid": true,
        "counts": counts,
        "manifests": session.manifests,
    }))
}
