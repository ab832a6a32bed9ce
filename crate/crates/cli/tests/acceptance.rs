//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails. Oracles here are written independently of the library.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use medmap_cli::{cmd_analyze, cmd_judge, cmd_map, AnalyzeTarget};
use medmap_core::carto::{gaussian_smooth, percentile_intervals, rising_window_interval, smooth_dense, LlmMap};
use medmap_core::causal::patching_effect;
use medmap_core::geometry::{local_anisotropy, mean_ci, silhouette};
use medmap_core::manifold::{umap_embed, UmapParams};
use medmap_core::seed::rng_from_seed;
use medmap_core::trace::{load_run, BundleWriter, CaptureKind, LesionRecord, PatchRecord, PatchSite, TensorBlob};
use medmap_core::Concept;
use medmap_judge::mock::{MockReply, MockServer};
use medmap_judge::{parse_score, Judge, JudgeCache, JudgeConfig, ParseError};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs as f64, || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn euclid(p: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    p.row(i)
        .iter()
        .zip(p.row(j))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn brute_silhouette(p: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let n = p.nrows();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for j in (0..n).filter(|&j| j != i) {
            sum[labels[j]] += euclid(p, i, j);
            cnt[labels[j]] += 1;
        }
        let own = labels[i];
        if cnt[own] == 0 {
            continue;
        }
        let a = sum[own] / cnt[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && cnt[c] > 0)
            .map(|c| sum[c] / cnt[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

fn silhouette_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = rng_from_seed(1001);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(6..=100);
        let dim = rng.random_range(1..=30);
        let k = rng.random_range(2..=5usize);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let spread = rng.random_range(0.0..3.0);
        let pts = Array2::from_shape_fn((n, dim), |(i, _)| {
            spread * labels[i] as f64 + rng.sample::<f64, _>(StandardNormal)
        });
        let got = silhouette(pts.view(), &labels).map_err(|e| format!("case {case}: {e}"))?;
        let diff = (got - brute_silhouette(pts.view(), &labels)).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("case {case}: differs by {diff:e}"))?;
    }
    within(t.elapsed(), 10)?;
    Ok(format!(
        "200 instances, max |diff| {worst:.1e}, {:.2}s",
        t.elapsed().as_secs_f64()
    ))
}

fn anisotropy_extremes() -> Outcome {
    let t = Instant::now();
    let line = Array2::from_shape_fn(
        (100, 2),
        |(i, j)| if j == 0 { 2.0 * i as f64 + 1.0 } else { -0.5 * i as f64 },
    );
    let a_line = local_anisotropy(line.view(), 20).map_err(|e| e.to_string())?;
    ensure((a_line - 1.0).abs() <= 1e-9, || format!("collinear {a_line}"))?;
    let grid = Array2::from_shape_fn((25, 2), |(i, j)| if j == 0 { (i % 5) as f64 } else { (i / 5) as f64 });
    let a_grid = local_anisotropy(grid.view(), 24).map_err(|e| e.to_string())?;
    ensure(a_grid.abs() <= 1e-9, || format!("grid {a_grid}"))?;
    let mut rng = rng_from_seed(4242);
    let n = 2000;
    // Covariance diag(4, 1): standard deviations 2 and 1.
    let gauss = Array2::from_shape_fn((n, 2), |(_, j)| {
        (if j == 0 { 2.0 } else { 1.0 }) * rng.sample::<f64, _>(StandardNormal)
    });
    let a_gauss = local_anisotropy(gauss.view(), n - 1).map_err(|e| e.to_string())?;
    ensure((a_gauss - 0.75).abs() <= 0.1, || format!("diag(4,1) {a_gauss}"))?;
    within(t.elapsed(), 5)?;
    Ok(format!(
        "collinear {a_line:.12}, grid {a_grid:.1e}, diag(4,1) {a_gauss:.4}"
    ))
}

fn patching_algebra() -> Outcome {
    let mut rng = rng_from_seed(77);
    let mut logit = || f64::from(rng.random_range(-15.0f32..15.0));
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let v: Vec<f64> = (0..9).map(|_| logit()).collect();
        let rec = PatchRecord {
            pair_id: "p".into(),
            layer: 0,
            site: PatchSite::Mlp,
            logit_clean_r: v[0],
            logit_clean_rp: v[1],
            logit_corrupt_r: v[2],
            logit_corrupt_rp: v[3],
            logit_patched_r: v[4],
            logit_patched_rp: v[5],
        };
        let Ok(p) = patching_effect(&rec) else { continue };
        let clean = PatchRecord {
            logit_patched_r: v[0],
            logit_patched_rp: v[1],
            ..rec.clone()
        };
        let corrupt = PatchRecord {
            logit_patched_r: v[2],
            logit_patched_rp: v[3],
            ..rec.clone()
        };
        ensure(patching_effect(&clean).unwrap().effect == 1.0, || {
            format!("record {checked}: P(clean) != 1")
        })?;
        ensure(patching_effect(&corrupt).unwrap().effect == 0.0, || {
            format!("record {checked}: P(corrupt) != 0")
        })?;
        let shifted = PatchRecord {
            logit_clean_r: v[0] + v[6],
            logit_clean_rp: v[1] + v[6],
            logit_corrupt_r: v[2] + v[7],
            logit_corrupt_rp: v[3] + v[7],
            logit_patched_r: v[4] + v[8],
            logit_patched_rp: v[5] + v[8],
            ..rec.clone()
        };
        let diff = (patching_effect(&shifted).unwrap().effect - p.effect).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-12, || {
            format!("record {checked}: shift changes P by {diff:e}")
        })?;
        checked += 1;
    }
    Ok(format!("1000 records, endpoints exact, max shift diff {worst:.1e}"))
}

fn interval_selection() -> Outcome {
    let some = |v: &[f64]| v.iter().copied().map(Some).collect::<Vec<_>>();
    // Step: every window enumerated; the best rate is the one holding the jump.
    let step: Vec<f64> = (0..16).map(|l| if l >= 8 { 10.0 } else { 0.0 }).collect();
    let w = rising_window_interval(&some(&step), 3).map_err(|e| e.to_string())?;
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 1..=step.len() - 3 {
        let rate = (step[i + 2] - step[i - 1]) / 3.0;
        if rate > best.0 {
            best = (rate, i);
        }
    }
    ensure(
        (w.start, w.end) == (best.1, best.1 + 2) && (w.start..=w.end).contains(&8),
        || format!("step window {}..{}", w.start, w.end),
    )?;

    // Five 2-layer plateaus: all runs enumerated, top three means kept.
    let mut s = vec![0.0; 40];
    for (start, v) in [(2, 7.0), (10, 5.0), (18, 9.0), (26, 6.0), (34, 8.0)] {
        s[start] = v;
        s[start + 1] = v;
    }
    let spans = percentile_intervals(&some(&s), 75.0, 2, 3).map_err(|e| e.to_string())?;
    let got: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    ensure(got == [(2, 3), (18, 19), (34, 35)], || format!("plateaus gave {got:?}"))?;

    let mut rng = rng_from_seed(9);
    for case in 0..100 {
        let n = rng.random_range(8..48);
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = rng.random_range(0.05..20.0);
        let shift = rng.random_range(-50.0..50.0);
        let variants = [
            base.clone(),
            base.iter().map(|v| v * scale).collect::<Vec<_>>(),
            base.iter().map(|v| v + shift).collect::<Vec<_>>(),
        ];
        let mut windows = Vec::new();
        let mut runs = Vec::new();
        for v in &variants {
            let sm = gaussian_smooth(&some(v), 1.0).map_err(|e| e.to_string())?;
            let w = rising_window_interval(&sm, 3).map_err(|e| e.to_string())?;
            windows.push((w.start, w.end));
            let p = percentile_intervals(&sm, 75.0, 2, 3).map_err(|e| e.to_string())?;
            runs.push(p.iter().map(|s| (s.start, s.end)).collect::<Vec<_>>());
        }
        ensure(windows.iter().all(|w| *w == windows[0]), || {
            format!("series {case}: windows {windows:?}")
        })?;
        ensure(runs.iter().all(|r| *r == runs[0]), || {
            format!("series {case}: runs {runs:?}")
        })?;
    }
    Ok("step and plateau fixtures exact; 100 series scale/shift invariant".into())
}

fn smoothing() -> Outcome {
    let c = smooth_dense(&[-3.25; 17], 1.0).map_err(|e| e.to_string())?;
    let dc = c.iter().map(|v| (v + 3.25).abs()).fold(0.0, f64::max);
    ensure(dc <= 1e-12, || format!("constant drifts by {dc:e}"))?;

    // Kernel exp(-d^2/2) truncated at |d| <= 3, renormalized over in-range cells.
    let n = 9;
    let center = 4;
    let mut impulse = vec![0.0; n];
    impulse[center] = 1.0;
    let out = smooth_dense(&impulse, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, o) in out.iter().enumerate() {
        let weight = |d: i64| {
            if d.abs() <= 3 {
                (-(d * d) as f64 / 2.0).exp()
            } else {
                0.0
            }
        };
        let norm: f64 = (0..n as i64).map(|j| weight(j - i as i64)).sum();
        let expect = weight(center as i64 - i as i64) / norm;
        worst = worst.max((o - expect).abs());
    }
    ensure(worst <= 1e-9, || format!("impulse differs by {worst:e}"))?;
    Ok(format!("constant drift {dc:.1e}, impulse max diff {worst:.1e}"))
}

fn umap_quality() -> Outcome {
    let t = Instant::now();
    let mut rng = rng_from_seed(2024);
    let dim = 20;
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let pts = Array2::from_shape_fn((300, dim), |(i, j)| {
        centers[labels[i]][j] + rng.sample::<f64, _>(StandardNormal)
    });
    let params = UmapParams::default();
    let a = umap_embed(pts.view(), 2, &params, 5).map_err(|e| e.to_string())?;
    let b = umap_embed(pts.view(), 2, &params, 5).map_err(|e| e.to_string())?;
    let bits = |e: &Array2<f64>| e.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.points) == bits(&b.points), || {
        "same seed, different embedding".into()
    })?;

    let emb = a.points.view();
    let s = brute_silhouette(emb, &labels);
    let k = 15;
    let mut same = 0;
    for i in 0..300 {
        let mut d: Vec<(f64, usize)> = (0..300).filter(|&j| j != i).map(|j| (euclid(emb, i, j), j)).collect();
        d.sort_by(|x, y| x.0.total_cmp(&y.0));
        same += d[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
    }
    let purity = same as f64 / (300 * k) as f64;
    ensure(s > 0.5, || format!("silhouette {s:.3}"))?;
    ensure(purity >= 0.8, || format!("purity {purity:.3}"))?;
    within(t.elapsed(), 60)?;
    Ok(format!(
        "silhouette {s:.3}, {k}-NN purity {purity:.3}, bit-exact, {:.1}s",
        t.elapsed().as_secs_f64()
    ))
}

fn planted_end_to_end() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = common::planted_pipeline(dir.path());
    let server = common::gibberish_judge();
    cfg.judge = Some(common::judge_config(&server));
    let step = |r: Result<medmap_cli::Summary, medmap_cli::CliError>| r.map(|_| ()).map_err(|e| e.to_string());
    step(cmd_analyze(&cfg, AnalyzeTarget::Umap, false))?;
    step(cmd_analyze(&cfg, AnalyzeTarget::Saliency, false))?;
    step(cmd_judge(&cfg))?;
    step(cmd_analyze(&cfg, AnalyzeTarget::Lesion, false))?;
    step(cmd_analyze(&cfg, AnalyzeTarget::Patch, false))?;
    step(cmd_map(&cfg, &["json".to_string()]))?;
    let text = fs::read_to_string(cfg.out_dir.join("map.json")).map_err(|e| e.to_string())?;
    let map: LlmMap = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let rows = map.rows.get(&Concept::Symptoms).ok_or("no symptoms row")?;
    ensure(rows.len() == 4, || format!("{} rows", rows.len()))?;
    let mut shown = Vec::new();
    for row in rows {
        let hit = row.intervals.iter().find(|iv| iv.start <= 15 && iv.end >= 10);
        let iv = hit.ok_or_else(|| format!("{:?} row misses [10,15]: {:?}", row.source, row.intervals))?;
        shown.push(format!("{}:{}-{}", row.source.as_str(), iv.start, iv.end));
    }
    within(t.elapsed(), 120)?;
    Ok(format!("{}, {:.1}s", shown.join(" "), t.elapsed().as_secs_f64()))
}

fn bootstrap_behavior() -> Outcome {
    let flat = mean_ci(&[2.5; 64], 1000, 3).map_err(|e| e.to_string())?;
    ensure(flat.width() == 0.0 && flat.mean == 2.5, || {
        format!("zero-variance CI {flat:?}")
    })?;
    let mut rng = rng_from_seed(123);
    let small: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
    let large: Vec<f64> = (0..1600).map(|_| rng.sample(StandardNormal)).collect();
    let ws = mean_ci(&small, 1000, 4).map_err(|e| e.to_string())?.width();
    let wl = mean_ci(&large, 1000, 4).map_err(|e| e.to_string())?.width();
    let ratio = ws / wl;
    ensure((2.0..=6.0).contains(&ratio), || format!("width ratio {ratio:.3}"))?;
    Ok(format!("zero-variance width 0, n=100 to n=1600 width ratio {ratio:.2}"))
}

fn judge_client() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../judge/tests/fixtures/replies.json");
    let cases: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(cases.len() >= 20, || format!("only {} fixtures", cases.len()))?;
    for c in &cases {
        let reply = c["reply"].as_str().ok_or("fixture without reply")?;
        let got = parse_score(reply);
        let ok = match (&c["expect"], &got) {
            (serde_json::Value::Number(n), Ok(s)) => n.as_u64() == Some(u64::from(*s)),
            (serde_json::Value::String(k), Err(e)) => matches!(
                (k.as_str(), e),
                ("no_score", ParseError::NoScore)
                    | ("fractional", ParseError::Fractional(_))
                    | ("out_of_range", ParseError::OutOfRange(_))
            ),
            _ => false,
        };
        ensure(ok, || format!("{reply:?}: expected {}, got {got:?}", c["expect"]))?;
    }

    let server = MockServer::start(|_| MockReply::Content("Score: 6".into())).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_path = dir.path().join("cache.jsonl");
    let cfg = JudgeConfig {
        endpoint: server.endpoint(),
        model: "mock".into(),
        api_key_env: None,
        ..JudgeConfig::default()
    };
    let records: Vec<LesionRecord> = (0..6)
        .map(|l| LesionRecord {
            prompt_id: "symptoms-lesioning-0000".into(),
            layer: l,
            original_response: "fever and rash".into(),
            lesioned_response: format!("variant {l}"),
            judge_score: None,
            judge_reply: None,
        })
        .collect();
    let run = || -> Result<usize, String> {
        let cache = JudgeCache::open(&cache_path).map_err(|e| e.to_string())?;
        let judge = Judge::connect(cfg.clone(), cache).map_err(|e| e.to_string())?;
        let report = judge.score_batch(&records, None);
        ensure(report.failures.is_empty(), || {
            format!("failures {:?}", report.failures.len())
        })?;
        ensure(report.records.iter().all(|r| r.judge_score == Some(6)), || {
            "wrong scores".into()
        })?;
        Ok(report.network_calls)
    };
    let first = run()?;
    let before = server.requests();
    let second = run()?;
    ensure(second == 0 && server.requests() == before, || {
        format!("repeat batch made {second} calls")
    })?;
    Ok(format!(
        "{} parser fixtures; batch calls {first} then {second}",
        cases.len()
    ))
}

fn fixture_conformance() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/harness");
    let e = |x: medmap_core::trace::TraceError| x.to_string();
    let acts = load_run(&root.join("activations")).map_err(e)?;
    let (n_layers, hidden) = (acts.manifest().n_layers, acts.manifest().hidden_dim);
    let ids: Vec<String> = acts.prompt_ids().map(String::from).collect();
    ensure(ids.len() == 4, || format!("{} activation records", ids.len()))?;
    for (p, id) in ids.iter().enumerate() {
        let trace = acts.read_activation(id).map_err(e)?;
        for r in 0..=n_layers {
            for c in 0..hidden {
                let want = (((p * 37 + r * hidden + c) % 128) as f32 - 64.0) / 8.0;
                let got = trace.row(r)[c];
                let nan_cell = id.ends_with("nan") && r == 1 && c == 3;
                ensure(
                    if nan_cell {
                        got.is_nan()
                    } else {
                        got.to_bits() == want.to_bits()
                    },
                    || format!("{id} row {r} col {c}: {got}"),
                )?;
            }
        }
    }
    let sal = load_run(&root.join("saliency")).map_err(e)?;
    for (i, r) in sal.saliency_records().map_err(e)?.iter().enumerate() {
        let want: Vec<f64> = (0..n_layers).map(|l| ((i + 1) * (l + 1)) as f64 / 16.0).collect();
        ensure(r.per_layer == want, || format!("saliency record {i}"))?;
    }
    let les = load_run(&root.join("lesion_responses")).map_err(e)?;
    let lr = les.lesion_records().map_err(e)?;
    ensure(lr.len() == n_layers && lr[2].judge_score == Some(7), || {
        "lesion records".into()
    })?;
    let pat = load_run(&root.join("patch_logits")).map_err(e)?;
    let pr = pat.patch_records().map_err(e)?;
    ensure(pr[5].logits() == [12.5, 4.25, 3.0, 9.75, 9.0, 8.75], || {
        "patch logits".into()
    })?;

    // The Rust writer reproduces the fixture bytes.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = acts.manifest();
    let mut w = BundleWriter::create(
        dir.path(),
        &m.model_name,
        n_layers,
        hidden,
        &m.corpus_id,
        CaptureKind::Activations,
    )
    .map_err(e)?;
    for id in &ids {
        let t = acts.read_activation(id).map_err(e)?;
        w.add_activation(
            id,
            &TensorBlob::new(t.matrix.shape.clone(), t.matrix.data.clone()).map_err(e)?,
        )
        .map_err(e)?;
    }
    w.finish().map_err(e)?;
    let files = |base: &Path| -> BTreeMap<PathBuf, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![base.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).into_iter().flatten().flatten() {
                let p = entry.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.insert(
                        p.strip_prefix(base).unwrap().to_path_buf(),
                        fs::read(&p).unwrap_or_default(),
                    );
                }
            }
        }
        out
    };
    ensure(files(&root.join("activations")) == files(dir.path()), || {
        "rewritten activation bundle differs".into()
    })?;
    Ok(format!(
        "4 bundles parsed bit-exactly; {} activation records rewritten byte-identically",
        ids.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("silhouette oracle equivalence", silhouette_oracle),
        ("anisotropy extremes", anisotropy_extremes),
        ("patching-effect algebra", patching_algebra),
        ("interval selection", interval_selection),
        ("gaussian smoothing", smoothing),
        ("umap quality", umap_quality),
        ("planted-signal end-to-end", planted_end_to_end),
        ("bootstrap behavior", bootstrap_behavior),
        ("judge client against mock server", judge_client),
        ("trace bundle format conformance", fixture_conformance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
