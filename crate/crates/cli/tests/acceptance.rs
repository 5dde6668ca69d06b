//! Acceptance suite: one PASS/FAIL line per criterion of the primary
//! component. Runs without a test harness so every line is always printed;
//! the process exits non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use arc_objects::augment::{assign_rtg, generate_random_grid, generate_trace, ExpertTrace};
use arc_objects::dataset::read_eval;
use arc_objects::dbscan::{euclidean, Point};
use arc_objects::grid::{Color, Coord, Grid};
use arc_objects::metrics::{evaluate_fixtures, load_fixtures, recall, silhouette, ObjectGroundTruth, CATEGORIES};
use arc_objects::pnp::{abstract_grid, cluster_map, edge_distance, push_pull, Adjacency, ClusterMap, PnpParams};
use arc_objects::task::{TaskKind, TaskSpec};
use arc_objects::trace::{parse_o2arc, serialize_trace, TraceError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const LISTED: [&[&str]; 10] = [
    &["start", "reflectx", "rotate", "end"],
    &["start", "rotate", "rotate", "reflecty", "rotate", "end"],
    &["start", "reflectx", "reflecty", "rotate", "reflectx", "end"],
    &["start", "rotate", "rotate", "rotate", "reflectx", "end"],
    &["start", "rotate", "reflectx", "rotate", "rotate", "end"],
    &["start", "reflecty", "reflectx", "rotate", "reflectx", "end"],
    &[
        "start", "rotate", "rotate", "reflectx", "rotate", "rotate", "rotate", "end",
    ],
    &["start", "reflecty", "rotate", "rotate", "rotate", "end"],
    &["start", "reflectx", "reflectx", "rotate", "reflecty", "end"],
    &["start", "rotate", "reflecty", "end"],
];

const REPLAY_BUDGET: Duration = Duration::from_secs(5);
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const AUGMENT_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_GRIDS: usize = 500;
const FORCE_TOL: f64 = 1e-9;
const RTG_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-9;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn grid(rows: &[&[u8]]) -> Grid {
    Grid::from_rows(rows.iter().map(|r| r.to_vec())).unwrap()
}

fn listed_sequences_replay() -> Verdict {
    let task = TaskSpec::new(TaskKind::DiagonalFlip);
    let experts: Vec<ExpertTrace> = LISTED
        .iter()
        .enumerate()
        .map(|(i, names)| ExpertTrace::from_names(names, format!("listed#{i}")).unwrap())
        .collect();
    let start = Instant::now();
    let mut matches = 0;
    let mut total = 0;
    for seed in 0..200 {
        let input = generate_random_grid(&task, seed).unwrap();
        assert_eq!(input.shape(), (5, 5));
        for expert in &experts {
            total += 1;
            if generate_trace(&input, expert).is_ok_and(|t| *t.final_grid() == input.transpose()) {
                matches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        matches == 2000 && total == 2000 && elapsed < REPLAY_BUDGET,
        format!("{matches}/{total} exact transposes in {:.2}s", elapsed.as_secs_f64()),
    )
}

fn distance_table() -> Verdict {
    let mut wrong = 0;
    let mut checked = 0;
    for a in 1..=9 {
        for b in 1..=9 {
            let (ca, cb) = (Color::new(a).unwrap(), Color::new(b).unwrap());
            let expected = if a == b { (1, 2) } else { (4, 5) };
            let got = (
                edge_distance(ca, cb, Adjacency::Direct),
                edge_distance(ca, cb, Adjacency::Diagonal),
            );
            checked += 1;
            if got != expected {
                wrong += 1;
            }
        }
    }
    verdict(
        wrong == 0,
        format!("{}/{checked} color pairs give (1, 2, 4, 5)", checked - wrong),
    )
}

fn pair_separation(g: &Grid) -> f64 {
    let after = push_pull(&abstract_grid(g)).positions();
    euclidean(after[0], after[1])
}

fn force_pass() -> Verdict {
    let root2 = 2f64.sqrt();
    let cases = [
        ("same direct", grid(&[&[3, 3]]), 1.0),
        ("same diagonal", grid(&[&[3, 0], &[0, 3]]), 3.0 * root2 - 1.0),
        ("diff direct", grid(&[&[3, 4]]), 4.0),
        ("diff diagonal", grid(&[&[3, 0], &[0, 4]]), 3.0 * root2 + 2.0),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g, expected) in cases {
        let got = pair_separation(&g);
        ok &= (got - expected).abs() < FORCE_TOL;
        parts.push(format!("{name} {got:.12}"));
    }
    verdict(ok, parts.join(", "))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let p = self.0[x];
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.0[x] = root;
        root
    }
}

fn component_labels(g: &Grid) -> ClusterMap {
    let (rows, cols) = g.shape();
    let mut uf = UnionFind((0..rows * cols).collect());
    for r in 0..rows {
        for c in 0..cols {
            let color = g.get(r, c);
            if color.is_black() {
                continue;
            }
            for (dr, dc) in [(0, 1), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if g.try_get(nr, nc) == Some(color) {
                    let (a, b) = (uf.find(r * cols + c), uf.find(nr as usize * cols + nc as usize));
                    uf.0[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut names = HashMap::new();
    let mut out = ClusterMap::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            if !g.get(r, c).is_black() {
                let root = uf.find(r * cols + c);
                let next = names.len() as u32 + 1;
                out.set(r, c, *names.entry(root).or_insert(next));
            }
        }
    }
    out
}

fn mixed_color_neighbors(g: &Grid) -> bool {
    g.non_black().any(|((r, c), color)| {
        arc_objects::grid::NEIGHBORS_8.iter().any(|&(dr, dc)| {
            g.try_get(r as isize + dr, c as isize + dc)
                .is_some_and(|n| !n.is_black() && n != color)
        })
    })
}

fn restricted_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params = PnpParams::default();
    let start = Instant::now();
    let (mut tested, mut agreed, mut multi_color) = (0, 0, 0);
    let mut first_miss: Option<Grid> = None;
    while tested < ORACLE_GRIDS {
        let (rows, cols) = (rng.gen_range(3..=10), rng.gen_range(3..=10));
        let colors = rng.gen_range(2..=4u8);
        let density = rng.gen_range(0.15..0.6);
        let g = Grid::from_fn(rows, cols, |_, _| {
            if rng.gen_bool(density) {
                Color::new(rng.gen_range(1..=colors)).unwrap()
            } else {
                Color::BLACK
            }
        });
        if g.is_all_black() || mixed_color_neighbors(&g) {
            continue;
        }
        tested += 1;
        if g.non_black().map(|(_, c)| c).collect::<BTreeSet<_>>().len() > 1 {
            multi_color += 1;
        }
        if cluster_map(&g, &params) == component_labels(&g) {
            agreed += 1;
        } else if first_miss.is_none() {
            first_miss = Some(g);
        }
    }
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{agreed}/{tested} grids ({multi_color} multi-color) match 8-connected components in {:.2}s",
        elapsed.as_secs_f64()
    );
    if let Some(g) = first_miss {
        detail.push_str(&format!("; first mismatch {:?}", g.to_rows()));
    }
    verdict(agreed == tested && elapsed < ORACLE_BUDGET, detail)
}

fn fixture_corpus() -> Verdict {
    let fixtures = load_fixtures(&core_dir().join("fixtures/pnp")).unwrap();
    let report = evaluate_fixtures(&fixtures, &PnpParams::default()).unwrap();
    let covered: BTreeSet<&str> = fixtures.iter().map(|f| f.category.as_str()).collect();
    let direct = report
        .categories
        .iter()
        .find(|row| row.category == CATEGORIES[0])
        .expect("direct-adjacency row");
    let table = report.to_string();
    let format_ok = report.categories.len() == 6
        && CATEGORIES.iter().all(|c| table.contains(c))
        && table.contains("recall")
        && table.contains("silhouette")
        && table.contains("Overall");
    verdict(
        fixtures.len() >= 30 && covered.len() == 6 && format_ok && direct.recall == 1.0,
        format!(
            "{} grids over {} categories; \"{}\" recall {}/{} = {:.4}; table format {}",
            fixtures.len(),
            covered.len(),
            CATEGORIES[0],
            direct.correct,
            direct.objects,
            direct.recall,
            if format_ok { "ok" } else { "wrong" }
        ),
    )
}

fn augment_scale() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_arc-objects"))
            .args([
                "augment",
                "--task",
                "diagonal_flip",
                "--train",
                "10000",
                "--eval",
                "2000",
                "--out",
            ])
            .arg(dir)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        (status.success(), start.elapsed())
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (ok_a, elapsed) = run(&a);
    let (ok_b, _) = run(&b);
    if !(ok_a && ok_b) {
        return verdict(false, "augment exited with an error");
    }
    let pairs: Vec<_> = read_eval(&a.join("eval.jsonl"))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    let transposed = pairs.iter().filter(|p| p.answer == p.input.transpose()).count();
    let identical = ["train.jsonl", "eval.jsonl", "manifest.json"]
        .iter()
        .all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap());
    verdict(
        elapsed < AUGMENT_BUDGET && pairs.len() == 2000 && transposed == pairs.len() && identical,
        format!(
            "first run {:.2}s; {transposed}/{} eval answers are transposes; rerun {}",
            elapsed.as_secs_f64(),
            pairs.len(),
            if identical { "byte-identical" } else { "differs" }
        ),
    )
}

fn rtg_partition() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut endpoints = true;
    for len in 2..=10 {
        let rtg = assign_rtg(len).unwrap();
        endpoints &= rtg.len() == len && rtg[0] == 0.0 && rtg[len - 1] == 1.0;
        let gap = 1.0 / (len - 1) as f64;
        for w in rtg.windows(2) {
            worst = worst.max(((w[1] - w[0]) - gap).abs());
        }
    }
    verdict(
        endpoints && worst < RTG_TOL,
        format!(
            "lengths 2..=10: endpoints {}, max gap error {worst:.2e}",
            if endpoints { "exact" } else { "wrong" }
        ),
    )
}

fn mutate(rng: &mut ChaCha8Rng, bytes: &[u8]) -> Vec<u8> {
    if rng.gen_bool(0.5) {
        let mut out = bytes.to_vec();
        for _ in 0..rng.gen_range(1..=4) {
            if out.is_empty() {
                break;
            }
            let i = rng.gen_range(0..out.len());
            match rng.gen_range(0..4) {
                0 => out[i] = rng.gen(),
                1 => {
                    out.remove(i);
                }
                2 => out.truncate(i),
                _ => out.insert(i, b"\"{}[],:-019x"[rng.gen_range(0..12)]),
            }
        }
        return out;
    }
    // swap one node of the inner action document for a value of another type
    let mut outer: Value = serde_json::from_slice(&serialize_trace(&parse_o2arc(bytes).unwrap())).unwrap();
    let mut inner: Value = serde_json::from_str(outer["action_sequence"].as_str().unwrap()).unwrap();
    let mut path = String::new();
    let mut node = &inner;
    while !rng.gen_bool(0.25) {
        match node {
            Value::Array(items) if !items.is_empty() => {
                let i = rng.gen_range(0..items.len());
                path.push_str(&format!("/{i}"));
                node = &items[i];
            }
            Value::Object(map) if !map.is_empty() => {
                let (k, v) = map.iter().nth(rng.gen_range(0..map.len())).unwrap();
                path.push_str(&format!("/{k}"));
                node = v;
            }
            _ => break,
        }
    }
    let replacement = [
        Value::Null,
        Value::from(-1),
        Value::from("x"),
        Value::from(10),
        serde_json::json!([[1], [2, 3]]),
    ][rng.gen_range(0..5)]
    .clone();
    *inner.pointer_mut(&path).unwrap() = replacement;
    outer["action_sequence"] = Value::from(inner.to_string());
    serde_json::to_vec(&outer).unwrap()
}

fn trace_round_trip() -> Verdict {
    let dir = core_dir().join("fixtures/traces");
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let docs: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
    let has_sample = files.iter().any(|p| p.ends_with("reflection_1779.json"));
    let synthesized = files.len() - usize::from(has_sample);
    let round_trips = docs
        .iter()
        .filter(|bytes| {
            parse_o2arc(bytes).is_ok_and(|t| parse_o2arc(&serialize_trace(&t)).is_ok_and(|again| again == t))
        })
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut typed, mut accepted, mut crashes) = (0, 0, 0);
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    for case in 0..1000 {
        let mutated = mutate(&mut rng, &docs[case % docs.len()]);
        match panic::catch_unwind(|| parse_o2arc(&mutated)) {
            Ok(Ok(_)) => accepted += 1,
            Ok(Err(
                TraceError::MalformedJson(_)
                | TraceError::DoubleEncoding(_)
                | TraceError::Schema { .. }
                | TraceError::GridShape { .. },
            )) => typed += 1,
            Err(_) => crashes += 1,
        }
    }
    panic::set_hook(hook);
    verdict(
        has_sample && synthesized >= 20 && round_trips == docs.len() && crashes == 0,
        format!(
            "sample {}, {synthesized} synthesized, {round_trips}/{} round-trip; fuzz: {typed} typed errors, {accepted} accepted, {crashes} crashes",
            if has_sample { "present" } else { "missing" },
            docs.len()
        ),
    )
}

fn metric_fixtures() -> Verdict {
    let close = |a: f64, b: f64| (a - b).abs() < METRIC_TOL;
    let g = grid(&[&[1, 1, 0, 2], &[0, 0, 0, 2], &[3, 0, 3, 0]]);
    let objects: Vec<BTreeSet<Coord>> = [&[(0, 0), (0, 1)][..], &[(0, 3), (1, 3)], &[(2, 0)], &[(2, 2)]]
        .iter()
        .map(|o| o.iter().copied().collect())
        .collect();
    let truth = ObjectGroundTruth::new(g, objects).unwrap();
    let labels = |rows: [[u32; 4]; 3]| ClusterMap::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
    let recall_cases = [
        (labels([[1, 1, 0, 2], [0, 0, 0, 2], [3, 0, 4, 0]]), 1.0),
        (labels([[1, 1, 0, 2], [0, 0, 0, 2], [3, 0, 3, 0]]), 0.5),
        (labels([[1, 2, 0, 3], [0, 0, 0, 3], [4, 0, 5, 0]]), 0.75),
        (labels([[1, 1, 0, 1], [0, 0, 0, 1], [1, 0, 1, 0]]), 0.0),
        (labels([[9, 9, 0, 4], [0, 0, 0, 4], [7, 0, 2, 0]]), 1.0),
        (labels([[1, 2, 0, 2], [0, 0, 0, 2], [3, 0, 4, 0]]), 0.5),
    ];
    let recall_ok = recall_cases
        .iter()
        .filter(|(map, want)| close(recall(map, &truth).unwrap(), *want))
        .count();

    let root101 = 101f64.sqrt();
    let square = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
    let triangle = [[0.0, 0.0], [3.0, 0.0], [0.0, 4.0], [0.0, 20.0]];
    let silhouette_cases: [(&[Point], &[u8], f64); 6] = [
        (&square, &[0, 0, 1, 1], 1.0 - 2.0 / (10.0 + root101)),
        (&square, &[0, 1, 0, 1], ((1.0 + root101) / 2.0 - 10.0) / 10.0),
        (&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], &[0, 0, 1], 7.0 / 18.0),
        (
            &[[0.0, 0.0], [2.0, 0.0], [5.0, 0.0], [6.0, 0.0]],
            &[0, 0, 1, 1],
            (7.0 / 11.0 + 3.0 / 7.0 + 3.0 / 4.0 + 4.0 / 5.0) / 4.0,
        ),
        (&[[0.0, 0.0], [4.0, 1.0], [9.0, 9.0]], &[0, 1, 2], 0.0),
        (
            &triangle,
            &[0, 0, 0, 1],
            ((1.0 - 3.5 / 20.0) + (1.0 - 4.0 / 409f64.sqrt()) + (1.0 - 4.5 / 16.0)) / 4.0,
        ),
    ];
    let silhouette_ok = silhouette_cases
        .iter()
        .filter(|(pts, labels, want)| close(silhouette(pts, labels).unwrap(), *want))
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(3..20);
        let pts: Vec<Point> = (0..n)
            .map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)])
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let (k, dx, dy) = (
            rng.gen_range(0.01..100.0),
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-100.0..100.0),
        );
        let moved: Vec<Point> = pts.iter().map(|p| [p[0] * k + dx, p[1] * k + dy]).collect();
        let (a, b) = (silhouette(&pts, &labels).unwrap(), silhouette(&moved, &labels).unwrap());
        worst = worst.max((a - b).abs());
    }
    verdict(
        recall_ok == recall_cases.len() && silhouette_ok == silhouette_cases.len() && worst < METRIC_TOL,
        format!(
            "recall {recall_ok}/{} and silhouette {silhouette_ok}/{} hand values; invariance max drift {worst:.2e} over 500 sets",
            recall_cases.len(),
            silhouette_cases.len()
        ),
    )
}

fn standalone() -> Verdict {
    let root = core_dir().join("../..");
    let manifests = [
        "Cargo.toml",
        "crates/core/Cargo.toml",
        "crates/cli/Cargo.toml",
        "crates/bench/Cargo.toml",
    ];
    let foreign = manifests.iter().filter(|m| {
        fs::read_to_string(root.join(m))
            .map(|t| {
                let t = t.to_lowercase();
                t.contains("python") || t.contains("pyo3") || t.contains("trainer")
            })
            .unwrap_or(false)
    });
    let count = foreign.count();
    verdict(
        count == 0,
        format!("{count} workspace manifests reference the training component; this suite needs only Rust"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("listed expert sequences transpose 2000 grids", listed_sequences_replay),
        ("edge distance table", distance_table),
        ("force-pass separations", force_pass),
        ("restricted oracle equivalence", restricted_oracle),
        ("fixture corpus recall and report", fixture_corpus),
        ("augmentation scale and determinism", augment_scale),
        ("rtg partition", rtg_partition),
        ("trace round trip and fuzzing", trace_round_trip),
        ("metric hand values and invariance", metric_fixtures),
        ("primary suite without training component", standalone),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
