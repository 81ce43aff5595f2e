//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Criterion 12 needs the public registry snapshots: point
//! `BENCHCONC_SNAPSHOT_DIR` at a directory holding `models.csv`,
//! `benchmarks.csv` and `affiliations.csv`.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use benchconc::abm::{self, SimConfig};
use benchconc::analytics;
use benchconc::graph::{self, NodeKind, SimpleGraph};
use benchconc::ingest::{self, Affiliation, BenchmarkRecord, LoadOptions, SnapshotFormat};
use benchconc::metrics::{self, AuthorityTable, ConcentrationSeries, GroupBy, RobustnessVariant};
use benchconc::sweep::{self, PhaseDiagram, SweepGrid};
use benchconc_cli::{execute, Cli};
use chrono::NaiveDate;
use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::*;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

/// Fails a passing verdict that ran past its time budget.
fn within(budget: Duration, elapsed: Duration, v: Verdict) -> Verdict {
    match v {
        Pass(d) if elapsed > budget => Fail(format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
        other => other,
    }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn record(id: &str, authors: &[&str], affiliations: &[(&str, &str, &str)]) -> BenchmarkRecord {
    let mut r = BenchmarkRecord::new(id, date(2022, 1, 1));
    r.name = id.to_string();
    r.authors = authors.iter().map(|s| s.to_string()).collect();
    r.affiliations = affiliations
        .iter()
        .map(|(a, i, c)| Affiliation {
            author: a.to_string(),
            institution: i.to_string(),
            country: c.to_string(),
        })
        .collect();
    r
}

// 1
fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
        let sum: f64 = x.iter().sum();
        let mut pair = 0.0;
        for a in &x {
            for b in &x {
                pair += (a - b).abs();
            }
        }
        let g = pair / (2.0 * n as f64 * sum);
        let h: f64 = x.iter().map(|v| (v / sum).powi(2)).sum();
        let (Ok(gg), Ok(hh)) = (metrics::gini(&x), metrics::hhi(&x)) else {
            return Fail("gini/hhi returned an error on a positive vector".into());
        };
        worst = worst.max((gg - g).abs()).max((hh - h).abs());
    }
    check(worst <= 1e-12, format!("max deviation {worst:.2e} over 1000 vectors"))
}

fn mean_over_seeds(seeds: u64, f: impl Fn(u64) -> f64) -> f64 {
    (0..seeds).map(&f).sum::<f64>() / seeds as f64
}

// 2
fn monopoly_regime() -> Verdict {
    let mean = mean_over_seeds(20, |seed| {
        let cfg = SimConfig {
            overfit_beta: 0.0,
            entry_gamma: 0.0,
            initial_benchmarks: 10,
            seed,
            ..SimConfig::default()
        };
        *abm::run(&cfg).unwrap().hhi_per_step.last().unwrap()
    });
    check(mean >= 0.8, format!("mean final HHI {mean:.4} (need >= 0.8)"))
}

// 3
fn pluralism_regime() -> Verdict {
    let mean = mean_over_seeds(20, |seed| {
        let cfg = SimConfig {
            overfit_beta: 0.02,
            entry_gamma: 1e-3,
            seed,
            ..SimConfig::default()
        };
        abm::steady_state_hhi(&abm::run(&cfg).unwrap(), abm::DEFAULT_TAIL_FRACTION).unwrap()
    });
    check(mean < 0.2, format!("mean steady-state HHI {mean:.4} (need < 0.2)"))
}

fn default_sweep() -> &'static (Result<PhaseDiagram, String>, Duration) {
    static CELL: OnceLock<(Result<PhaseDiagram, String>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let d = sweep::run_sweep(&SweepGrid::default_grid(SimConfig::default())).map_err(|e| e.to_string());
        (d, start.elapsed())
    })
}

// 4
fn tipping_location() -> Verdict {
    let (diagram, elapsed) = default_sweep();
    let diagram = match diagram {
        Ok(d) => d,
        Err(e) => return Fail(format!("sweep failed: {e}")),
    };
    let contour = sweep::tipping_contour(diagram, sweep::DEFAULT_LEVEL);
    let mut bad = Vec::new();
    for &beta in &diagram.grid.beta_values {
        let crossings = contour.crossings_for(beta);
        if crossings.is_empty() {
            bad.push(format!("beta={beta}: no crossing"));
        } else if let Some(g) = crossings.iter().find(|g| !(1e-5..=1e-3).contains(*g)) {
            bad.push(format!("beta={beta}: gamma*={g:.2e}"));
        }
    }
    let inside = diagram.grid.beta_values.len() - bad.len();
    let detail = format!(
        "{inside}/{} beta rows cross inside [1e-5, 1e-3]{}",
        diagram.grid.beta_values.len(),
        if bad.is_empty() { String::new() } else { format!("; {}", bad.join(", ")) }
    );
    within(Duration::from_secs(600), *elapsed, check(bad.is_empty(), detail))
}

// 5
fn beta_insensitivity() -> Verdict {
    let diagram = match &default_sweep().0 {
        Ok(d) => d,
        Err(e) => return Fail(format!("sweep failed: {e}")),
    };
    match sweep::beta_sensitivity(diagram, sweep::DEFAULT_LEVEL) {
        Ok(r) => check((0.1..=10.0).contains(&r), format!("ratio {r:.3} (need within [0.1, 10])")),
        Err(e) => Fail(format!("ratio undefined: {e}")),
    }
}

/// Runs one command through the same entry point as the binary.
fn cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let argv = ["benchconc", "--out", out.to_str().unwrap()].into_iter().chain(args.iter().copied());
    let parsed = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
    execute(&parsed).map(|_| ()).map_err(|e| format!("{e:#}"))
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        let (x, y) = (fs::read(a.join(n)), fs::read(b.join(n)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => return Err(format!("{n} differs between {} and {}", a.display(), b.display())),
        }
    }
    Ok(())
}

// 6
fn determinism() -> Verdict {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return Fail(e.to_string()),
    };
    let tmp = tmp.path();
    let run = || -> Result<(), String> {
        let sim = ["--seed", "99", "simulate", "--gamma", "1e-3"];
        cli(&tmp.join("sim1"), &sim)?;
        cli(&tmp.join("sim2"), &sim)?;
        same_files(&tmp.join("sim1"), &tmp.join("sim2"), &["trajectory.csv", "config.json"])?;

        let grid = [
            "--seed", "99", "sweep", "--beta-count", "3", "--gamma-count", "6", "--replicates", "4", "--steps", "3000",
        ];
        for (dir, jobs) in [("j1", "1"), ("j8", "8"), ("j8b", "8")] {
            let mut args = grid.to_vec();
            args.extend(["--jobs", jobs]);
            cli(&tmp.join(dir), &args)?;
        }
        same_files(&tmp.join("j1"), &tmp.join("j8"), &["phase.csv", "tipping.csv"])?;
        same_files(&tmp.join("j8"), &tmp.join("j8b"), &["phase.csv", "tipping.csv"])
    };
    match run() {
        Ok(()) => Pass("simulate reruns and sweep --jobs 1/8/8 are byte-identical".into()),
        Err(e) => Fail(e),
    }
}

fn bfs(g: &SimpleGraph, s: usize) -> Vec<Option<usize>> {
    let mut d = vec![None; g.node_count()];
    d[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in g.neighbors(u) {
            if d[v].is_none() {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

fn walk(g: &SimpleGraph, to_t: &[Option<usize>], path: &mut Vec<usize>, hits: &mut [f64], total: &mut f64) {
    let u = *path.last().unwrap();
    if to_t[u] == Some(0) {
        *total += 1.0;
        path[1..path.len() - 1].iter().for_each(|&v| hits[v] += 1.0);
        return;
    }
    for &v in g.neighbors(u) {
        if matches!((to_t[v], to_t[u]), (Some(a), Some(b)) if a + 1 == b) {
            path.push(v);
            walk(g, to_t, path, hits, total);
            path.pop();
        }
    }
}

fn brute_betweenness(g: &SimpleGraph) -> Vec<f64> {
    let n = g.node_count();
    let dist: Vec<_> = (0..n).map(|t| bfs(g, t)).collect();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in (0..n).filter(|&t| t != s && dist[t][s].is_some()) {
            let (mut hits, mut total) = (vec![0.0; n], 0.0);
            walk(g, &dist[t], &mut vec![s], &mut hits, &mut total);
            bc.iter_mut().zip(&hits).for_each(|(b, h)| *b += h / total);
        }
    }
    let norm = ((n - 1) * (n - 2)) as f64;
    bc.into_iter().map(|b| b / norm).collect()
}

// 7
fn graph_closed_forms() -> Verdict {
    let mut failures = Vec::new();

    let star = graph::build_graph(&[record("hub", &["a1", "a2", "a3", "a4", "a5"], &[])]).unwrap();
    let dc = graph::degree_centrality(&star).unwrap();
    let hub = star.find(NodeKind::Benchmark, "hub").unwrap().id;
    if dc[&hub] != 1.0 {
        failures.push(format!("star center centrality {}", dc[&hub]));
    }

    let path = graph::build_graph(&[record("b", &["a"], &[("a", "i", "")])]).unwrap();
    let bc = graph::betweenness(&path);
    let mid = path.find(NodeKind::Author, "a").unwrap().id;
    if bc[&mid] != 1.0 {
        failures.push(format!("path middle betweenness {}", bc[&mid]));
    }

    let complete = SimpleGraph::from_edges(6, (0..6).flat_map(|u| (u + 1..6).map(move |v| (u, v)))).unwrap();
    if complete.betweenness(true).iter().any(|&b| b != 0.0) {
        failures.push("complete graph has nonzero betweenness".into());
    }

    let tree = graph::build_graph(&[
        record("b1", &["a1", "a2"], &[("a1", "i1", "")]),
        record("b2", &["a3"], &[("a3", "i1", "")]),
    ])
    .unwrap();
    let core = graph::k_core(&tree, 2).unwrap();
    if core.node_count() != 0 {
        failures.push(format!("tree 2-core has {} nodes", core.node_count()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let p = [0.08, 0.12, 0.2, 0.3][trial % 4];
        let mut g = SimpleGraph::new(30);
        for u in 0..30 {
            for v in u + 1..30 {
                if rng.random_bool(p) {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        let expect = brute_betweenness(&g);
        for (a, b) in g.betweenness(true).iter().zip(&expect) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst > 1e-9 {
        failures.push(format!("betweenness deviates from path enumeration by {worst:.2e}"));
    }
    if failures.is_empty() {
        Pass(format!("closed forms hold; brute-force deviation {worst:.1e} on 20 random 30-node graphs"))
    } else {
        Fail(failures.join("; "))
    }
}

// 8
fn allocation_conservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reference = date(2026, 1, 1);
    let variants = [
        RobustnessVariant::baseline(),
        RobustnessVariant::rate_per_age(0.25, reference).unwrap(),
        RobustnessVariant::windowed(2.0, reference).unwrap(),
        RobustnessVariant::decay(3.0, reference).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(1..30);
        let records: Vec<BenchmarkRecord> = (0..n)
            .map(|i| {
                let mut r = BenchmarkRecord::new(format!("b{i}"), date(rng.random_range(2015..2026), rng.random_range(1..=12), 1));
                r.citations = rng.random_range(0..10_000);
                r.stars = rng.random_range(0..50_000);
                for a in 0..rng.random_range(0..6) {
                    r.authors.push(format!("a{a}"));
                    if rng.random_bool(0.7) {
                        r.affiliations.push(Affiliation {
                            author: format!("a{a}"),
                            institution: format!("inst{}", rng.random_range(0..8)),
                            country: String::new(),
                        });
                    }
                }
                r
            })
            .collect();
        for v in &variants {
            let weights = metrics::benchmark_weights(&records, v, 0.25).unwrap();
            let table = metrics::allocate_authority(&records, v, 0.25, GroupBy::Institution).unwrap();
            let allocated: f64 = table.iter().map(|(_, m)| m).sum();
            worst = worst.max((allocated - weights.iter().sum::<f64>()).abs());
        }
    }
    check(worst <= 1e-9, format!("max imbalance {worst:.2e} over 500 fixtures x 4 variants"))
}

fn table(entries: &[(&str, f64)]) -> AuthorityTable {
    AuthorityTable::from_entries(entries.iter().map(|(n, m)| (n.to_string(), *m))).unwrap()
}

// 9
fn rank_stability() -> Verdict {
    let names: Vec<String> = (0..13).map(|i| format!("e{i:02}")).collect();
    // a's top 10 = e00..e09, b's top 10 = e00..e06 plus e10..e12
    let a = AuthorityTable::from_entries(names.iter().enumerate().map(|(i, n)| (n.clone(), 100.0 - i as f64))).unwrap();
    let b = AuthorityTable::from_entries(names.iter().enumerate().map(|(i, n)| {
        let m = if (7..10).contains(&i) { 1.0 } else { 100.0 - i as f64 };
        (n.clone(), m)
    }))
    .unwrap();
    let j = metrics::jaccard_top_k(&a, &b, 10).unwrap();

    let x = table(&[("A", 4.0), ("B", 3.0), ("C", 2.0)]);
    let y = table(&[("A", 4.0), ("C", 3.0), ("D", 2.0)]);
    let rev = table(&[("A", 1.0), ("B", 2.0), ("C", 3.0)]);
    let disjoint = table(&[("P", 1.0), ("Q", 2.0), ("R", 3.0)]);
    let cases = [
        ("jaccard 7 of 10", j, 7.0 / 13.0),
        ("jaccard identical", metrics::jaccard_top_k(&x, &x, 3).unwrap(), 1.0),
        ("jaccard disjoint", metrics::jaccard_top_k(&x, &disjoint, 3).unwrap(), 0.0),
        ("spearman identical", metrics::spearman_top_union(&x, &x, 3).unwrap(), 1.0),
        ("spearman reversed", metrics::spearman_top_union(&x, &rev, 3).unwrap(), -1.0),
        // union {A,B,C,D}: ranks (1,2,3,4) vs (1,4,2,3), correlation 2/5
        ("spearman with absentees", metrics::spearman_top_union(&x, &y, 3).unwrap(), 0.4),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12)
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();
    check(
        bad.is_empty() && (j - 0.538).abs() < 5e-4,
        if bad.is_empty() { format!("7-of-10 Jaccard {j:.4}; all hand values match") } else { bad.join("; ") },
    )
}

// 10
fn trend_fit() -> Verdict {
    let decline = ConcentrationSeries::new((0..6).map(|t| (2018 + t, 0.5 * 0.9f64.powi(t))).collect()).unwrap();
    let flat = ConcentrationSeries::new((0..6).map(|t| (2018 + t, 0.3)).collect()).unwrap();
    let (Ok(d), Ok(f)) = (metrics::trend_fit(&decline), metrics::trend_fit(&flat)) else {
        return Fail("trend fit errored".into());
    };
    let width = d.ci95.1 - d.ci95.0;
    check(
        (d.annual_change_rate + 0.10).abs() <= 1e-9 && width.abs() <= 1e-9 && f.ci_contains(0.0),
        format!(
            "declining rate {:.12}, CI width {width:.1e}; constant-series CI [{:.2e}, {:.2e}]",
            d.annual_change_rate, f.ci95.0, f.ci95.1
        ),
    )
}

// 11
fn pca() -> Verdict {
    let names: Vec<String> = (0..8).map(|i| format!("m{i}")).collect();
    let direction = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0, 2.0];
    let rank1: Vec<Vec<f64>> = (0..7).map(|t| direction.iter().map(|d| d * (t as f64 - 3.0)).collect()).collect();
    let r1 = analytics::pca_matrix(&rank1, &names, 1).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let full: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let rf = analytics::pca_matrix(&full, &names, 8).unwrap();
    let recon = rf.reconstruct();
    let err = full
        .iter()
        .flatten()
        .zip(recon.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let sum: f64 = rf.explained_variance_ratio.iter().sum();
    check(
        (r1.explained_variance_ratio[0] - 1.0).abs() <= 1e-9 && err <= 1e-9 && (sum - 1.0).abs() <= 1e-9,
        format!(
            "rank-1 ratio {:.12}; reconstruction error {err:.1e}; ratio sum {sum:.12}",
            r1.explained_variance_ratio[0]
        ),
    )
}

// 12
fn registry_snapshots() -> Verdict {
    let Some(dir) = std::env::var_os("BENCHCONC_SNAPSHOT_DIR").map(PathBuf::from) else {
        return Skip("set BENCHCONC_SNAPSHOT_DIR to run against the registry snapshots".into());
    };
    match snapshot_checks(&dir) {
        Ok((true, d)) => Pass(d),
        Ok((false, d)) => Fail(d),
        Err(e) => Fail(e),
    }
}

fn snapshot_checks(dir: &Path) -> Result<(bool, String), String> {
    let e = |x: benchconc::Error| x.to_string();
    let opts = LoadOptions::default();
    let bench = ingest::load_benchmarks(
        &dir.join("benchmarks.csv"),
        Some(&dir.join("affiliations.csv")),
        SnapshotFormat::Csv,
        &opts,
    )
    .map_err(e)?
    .records;
    let models = ingest::load_models(&dir.join("models.csv"), SnapshotFormat::Csv, &opts).map_err(e)?.records;

    let mut notes = Vec::new();
    let mut all = true;
    let mut note = |ok: bool, s: String| {
        all &= ok;
        notes.push(format!("{}{s}", if ok { "" } else { "!" }));
    };

    let base = metrics::allocate_authority(&bench, &RobustnessVariant::baseline(), 0.25, GroupBy::Institution).map_err(e)?;
    let g = metrics::gini(&base.masses()).map_err(e)?;
    note((g - 0.89).abs() <= 0.01, format!("authority gini {g:.4}"));
    let top3: f64 = metrics::top_shares(&base, 3).map_err(e)?.iter().map(|(_, s)| s).sum();
    note(top3 >= 0.49, format!("top-3 share {top3:.4}"));

    let pareto = analytics::country_pareto(&bench).map_err(e)?;
    note((pareto.gini - 0.889).abs() <= 0.005, format!("country gini {:.4}", pareto.gini));

    let graph = graph::build_graph(&bench).map_err(e)?;
    note(
        graph.node_count() == 2402 && graph.edge_count() == 4559,
        format!("graph {} nodes / {} edges", graph.node_count(), graph.edge_count()),
    );

    for (alpha, want) in [(0.0, 0.04200946), (0.25, 0.04200146), (0.5, 0.04199466)] {
        let t = metrics::allocate_authority(&bench, &RobustnessVariant::baseline(), alpha, GroupBy::Institution)
            .map_err(e)?;
        let h = metrics::hhi(&t.masses()).map_err(e)?;
        note((h - want).abs() <= 1e-6, format!("HHI(alpha={alpha}) {h:.8}"));
    }

    let ind = analytics::derive_indicators(&models).map_err(e)?;
    let p = analytics::pca(&ind, 2.min(ind.years.len())).map_err(e)?;
    let top2: f64 = p.explained_variance_ratio.iter().sum();
    note((top2 - 0.81).abs() <= 0.02, format!("PCA top-2 {top2:.4}"));

    Ok((all, notes.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, fn() -> Verdict, Option<u64>); 12] = [
        (1, "gini/hhi oracle equivalence", oracle_equivalence, Some(5)),
        (2, "monopoly regime", monopoly_regime, Some(30)),
        (3, "pluralism regime", pluralism_regime, Some(60)),
        (4, "tipping location", tipping_location, None),
        (5, "beta insensitivity", beta_insensitivity, None),
        (6, "determinism", determinism, None),
        (7, "graph closed forms", graph_closed_forms, None),
        (8, "allocation conservation", allocation_conservation, None),
        (9, "rank-stability metrics", rank_stability, None),
        (10, "trend fit", trend_fit, None),
        (11, "pca", pca, None),
        (12, "registry snapshots", registry_snapshots, None),
    ];
    let mut failed = 0;
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let mut verdict = f();
        let elapsed = start.elapsed();
        if let Some(secs) = budget {
            verdict = within(Duration::from_secs(secs), elapsed, verdict);
        }
        let (tag, detail) = match verdict {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] criterion {id:>2} {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
    }
    println!("acceptance: {failed} of 12 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
