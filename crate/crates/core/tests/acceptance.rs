//! One line per acceptance criterion, then a single pass/fail verdict.
//!
//! Run with `cargo test -p fairkit --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::time::Instant;

use fairkit::curation::filters::{hsv_to_rgb, FaceBox};
use fairkit::curation::sparql::MALE_QID;
use fairkit::curation::{
    build_sparql, color_delta, padded_crop_box, run_filter_chain, skin_ratio, Detection, FilterThresholds,
    RejectReason, SparqlRequest, StubDetector,
};
use fairkit::embedset::{load_embeddings, save_embeddings};
use fairkit::inlp::best_probe;
use fairkit::linalg::{dot, norm};
use fairkit::metrics::{jsd_bits, normalized_jsd, recall_at_k, uniform_reference};
use fairkit::pipeline::{cmd_debias, cmd_split, DebiasConfig};
use fairkit::report::{format_cell, Table3Row};
use fairkit::rng::{Gaussian, SplitMix64};
use fairkit::slerpcomp::{compensate, slerp_blend, SlerpParams};
use fairkit::synth::{generate, planted_recovery_angle, SynthSpec};
use fairkit::{
    apply_transform, fit_inlp, project, ConceptVector, EmbeddingSet, Gender, InlpConfig, RowLabel,
};
use image::{Rgb, RgbImage};

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn unit_random(g: &mut Gaussian, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| g.sample()).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn projection_algebra() -> Outcome {
    let start = Instant::now();
    let mut g = Gaussian::new(SEED);
    let (mut worst_orth, mut worst_idem) = (0.0f64, 0.0f64);
    for d in [8, 512] {
        for _ in 0..1000 {
            let scale = 10f64.powf(4.0 * g.sample().tanh());
            let v: Vec<f64> = (0..d).map(|_| scale * g.sample()).collect();
            let w = unit_random(&mut g, d);
            let p = project(&v, &w).unwrap();
            let pp = project(&p, &w).unwrap();
            worst_orth = worst_orth.max(dot(&w, &p).abs() / norm(&v));
            let diff = p.iter().zip(&pp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_idem = worst_idem.max(diff / norm(&v).max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_orth <= 1e-9 && worst_idem <= 1e-9 && secs < 5.0,
        format!("max |w.Pv|/|v| = {worst_orth:.2e}, max |PPv - Pv| = {worst_idem:.2e}, {secs:.2}s"),
    )
}

fn inlp_recovery() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec::single_axis(SEED);
    let data = generate(&spec).unwrap();
    let cfg = InlpConfig::default();
    let t = fit_inlp(&data.set, &cfg).unwrap();
    let angle = planted_recovery_angle(&t, &data.ground_truth).unwrap()[0];
    let after = apply_transform(&t, &data.set).unwrap();
    let probe = best_probe(&after, &cfg).unwrap().expect("non-degenerate probe");
    let secs = start.elapsed().as_secs_f64();
    let k = t.len();
    outcome(
        (1..=3).contains(&k) && angle < 10.0 && probe.direction.train_accuracy <= probe.chance + 0.05 && secs < 60.0,
        format!(
            "K = {k}, angle = {angle:.3} deg, residual accuracy {:.4} vs majority {:.4}, {secs:.2}s",
            probe.direction.train_accuracy, probe.chance
        ),
    )
}

struct Benchmark {
    before: EmbeddingSet,
    after: EmbeddingSet,
    relevant: Vec<bool>,
    concepts: Vec<ConceptVector>,
    delta_sigma: f64,
    jsd: (f64, f64),
}

fn benchmark() -> Benchmark {
    let spec = SynthSpec::single_axis(SEED);
    let data = generate(&spec).unwrap();
    let concepts = spec.concepts().unwrap();
    let (train, eval) = cmd_split(&data.set, SEED).unwrap();
    let out = cmd_debias(&train, &eval, &concepts, &DebiasConfig::default()).unwrap();
    let by_id: BTreeMap<&str, bool> = data
        .set
        .labels()
        .iter()
        .zip(&data.relevant)
        .map(|(l, &r)| (l.source_id.as_str(), r))
        .collect();
    let relevant = eval.labels().iter().map(|l| by_id[l.source_id.as_str()]).collect();
    let r = &out.reports[0];
    Benchmark {
        delta_sigma: r.delta_sigma_pct.unwrap(),
        jsd: (r.jsd_before, r.jsd_after.unwrap()),
        before: eval,
        after: out.debiased,
        relevant,
        concepts,
    }
}

fn dispersion(b: &Benchmark) -> Outcome {
    outcome(
        b.delta_sigma >= 30.0 && b.jsd.1 < b.jsd.0,
        format!("delta sigma = {:.3}%, JSD {:.4} -> {:.4}", b.delta_sigma, b.jsd.0, b.jsd.1),
    )
}

fn utility(b: &Benchmark) -> Outcome {
    let semantic = b.concepts.iter().find(|c| c.text == "semantic").unwrap();
    let before = recall_at_k(&b.before, semantic, 500, &b.relevant).unwrap();
    let after = recall_at_k(&b.after, semantic, 500, &b.relevant).unwrap();
    let drop_pp = (before - after) * 100.0;
    outcome(
        drop_pp < 1.5,
        format!("Recall@500 {before:.4} -> {after:.4} (drop {drop_pp:.3} pp)"),
    )
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
}

fn slerp() -> Outcome {
    let mut g = Gaussian::new(SEED ^ 1);
    let (mut norm_err, mut end_err) = (0.0f64, 0.0f64);
    let mut monotone = true;
    for _ in 0..200 {
        let d = 16;
        let scale = 0.1 + 5.0 * g.sample().abs();
        let v: Vec<f64> = (0..d).map(|_| scale * g.sample()).collect();
        let w = unit_random(&mut g, d);
        let p = project(&v, &w).unwrap();
        let vn = norm(&v);
        let mut last = -1.0;
        for i in 0..=10 {
            let alpha = i as f64 / 10.0;
            let out = slerp_blend(&v, &p, SlerpParams::new(alpha).unwrap()).unwrap();
            norm_err = norm_err.max((norm(&out) - vn).abs());
            let target = match i {
                0 => Some(&v),
                10 => Some(&p),
                _ => None,
            };
            if let Some(t) = target {
                let tn = norm(t);
                let e = out.iter().zip(t).map(|(o, x)| (o / vn - x / tn).abs()).fold(0.0, f64::max);
                end_err = end_err.max(e);
            }
            let a = angle(&out, &v);
            if a + 1e-12 < last {
                monotone = false;
            }
            last = a;
        }
    }
    outcome(
        norm_err <= 1e-9 && end_err <= 1e-9 && monotone,
        format!("max norm error {norm_err:.2e}, endpoint error {end_err:.2e}, monotone angle: {monotone}"),
    )
}

fn compensation() -> Outcome {
    let mut g = Gaussian::new(SEED ^ 2);
    let (mut beta_exact, mut max_perp) = (true, 0.0f64);
    for _ in 0..200 {
        let d = 12;
        let t = ConceptVector::new("t", unit_random(&mut g, d)).unwrap();
        let v: Vec<f64> = (0..d).map(|_| g.sample()).collect();
        let deb = project(&v, &unit_random(&mut g, d)).unwrap();
        let r = compensate(&deb, &v, &t).unwrap();
        beta_exact &= r.beta == 2.0 * r.delta_s;
        let diff: Vec<f64> = r.v_comp.iter().zip(&deb).map(|(a, b)| a - b).collect();
        let along = dot(&diff, &t.vector);
        let perp = diff
            .iter()
            .zip(&t.vector)
            .map(|(x, tt)| x - along * tt)
            .map(f64::abs)
            .fold(0.0, f64::max);
        max_perp = max_perp.max(perp);
    }
    let t = ConceptVector::new("t", vec![0.0, 1.0, 0.0]).unwrap();
    let same = vec![0.3, 0.4, 0.5];
    let null = compensate(&same, &same, &t).unwrap();
    let null_ok = null.delta_s == 0.0 && null.v_comp == same;
    outcome(
        beta_exact && max_perp <= 1e-12 && null_ok,
        format!("beta == 2 dS: {beta_exact}, max off-axis component {max_perp:.2e}, dS = 0 is a no-op: {null_ok}"),
    )
}

fn jsd_oracles() -> Outcome {
    let groups: Vec<String> = (0..36).map(|i| format!("s{i:02}")).collect();
    let uniform = uniform_reference(&groups);
    let counts: BTreeMap<String, usize> = groups.iter().map(|g| (g.clone(), 7)).collect();
    let same = normalized_jsd(&counts, &uniform).unwrap();
    let a: BTreeMap<String, usize> = [("a".to_string(), 1), ("b".to_string(), 0)].into();
    let only_b: BTreeMap<String, f64> = [("a".to_string(), 0.0), ("b".to_string(), 1.0)].into();
    let half: BTreeMap<String, f64> = [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into();
    let disjoint = normalized_jsd(&a, &only_b).unwrap();
    let partial = normalized_jsd(&a, &half).unwrap();
    let mut rng = SplitMix64::new(SEED ^ 3);
    let mut asym = 0.0f64;
    for _ in 0..100 {
        let n = 2 + rng.below(40) as usize;
        let mut draw = || {
            let v: Vec<f64> = (0..n).map(|_| if rng.below(5) == 0 { 0.0 } else { rng.next_f64() }).collect();
            let s: f64 = v.iter().sum::<f64>().max(1e-300);
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (p, q) = (draw(), draw());
        asym = asym.max((jsd_bits(&p, &q) - jsd_bits(&q, &p)).abs());
    }
    outcome(
        same.abs() <= 1e-12 && (disjoint - 1.0).abs() <= 1e-12 && (partial - 0.311278).abs() <= 1e-6 && asym <= 1e-12,
        format!("uniform {same:.1e}, disjoint {disjoint:.12}, half {partial:.6}, asymmetry {asym:.1e}"),
    )
}

fn curation() -> Outcome {
    let th = FilterThresholds::default();
    let gray = RgbImage::from_pixel(32, 32, Rgb([128, 128, 128]));
    let gray_delta = color_delta(&gray).unwrap();
    let gray_verdict = run_filter_chain(&gray, &StubDetector::default(), &th).unwrap();
    let gray_ok = gray_delta == 0.0 && gray_verdict.reject_reason == Some(RejectReason::Grayscale);

    // Pixels are RGB, so (B, G, R) = (100, 110, 120) is [120, 110, 100].
    let delta = color_delta(&RgbImage::from_pixel(8, 8, Rgb([120, 110, 100]))).unwrap();
    let delta_ok = (delta - 13.333).abs() <= 1e-3 && (delta - 40.0 / 3.0).abs() <= 1e-6;

    let skin = skin_ratio(&RgbImage::from_pixel(8, 8, Rgb(hsv_to_rgb([12, 120, 150])))).unwrap();
    let skin_ok = skin == 1.0 && skin >= th.skin_ratio_min;

    let a = hsv_to_rgb([10, 150, 230]);
    let b = hsv_to_rgb([14, 110, 90]);
    let textured = RgbImage::from_fn(64, 64, |x, y| Rgb(if (x + y) % 2 == 0 { a } else { b }));
    let stub = StubDetector::new(vec![Detection {
        bbox: FaceBox::new(4, 4, 30, 30),
        confidence: 0.3,
    }]);
    let low = run_filter_chain(&textured, &stub, &th).unwrap();
    let conf_ok = !low.passed && low.reject_reason == Some(RejectReason::LowConfidence);

    let pad = padded_crop_box(FaceBox::new(100, 100, 200, 100), (1000, 1000), 0.2).unwrap();
    let pad_ok = pad == (60, 60, 340, 240);
    outcome(
        gray_ok && delta_ok && skin_ok && conf_ok && pad_ok,
        format!(
            "grayscale delta {gray_delta} ({:?}), delta {delta:.6}, skin ratio {skin}, stub 0.3 -> {:?}, pad {pad:?}",
            gray_verdict.reject_reason.unwrap(),
            low.reject_reason
        ),
    )
}

fn sparql() -> Outcome {
    let req = SparqlRequest::new("Q1498", MALE_QID).unwrap();
    let q = build_sparql(&req).unwrap();
    let needles = [
        "wdt:P19|wdt:P551|wdt:P937",
        "wdt:P131*",
        "wdt:P69",
        "wdt:P39",
        "wdt:P768",
        "wd:Q1498",
        "wd:Q6581097",
    ];
    let missing: Vec<&str> = needles.iter().copied().filter(|n| !q.contains(n)).collect();
    let stable = (0..10).all(|_| build_sparql(&req).unwrap().as_bytes() == q.as_bytes());
    outcome(
        missing.is_empty() && stable,
        format!("missing paths {missing:?}, byte-identical over 10 runs: {stable}"),
    )
}

fn report_schema() -> Outcome {
    let row = Table3Row::from_sigmas("OpenAI CLIP (ViT-B-32)", "Indian person", 1.0, 0.86851).unwrap();
    let v = row.delta_sigma_pct.unwrap();
    let cell = format_cell(row.delta_sigma_pct);
    outcome(
        (v - 13.149).abs() <= 1e-3 && cell == "13.149",
        format!("delta sigma {v:.6} rendered as {cell}"),
    )
}

fn round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(SEED ^ 4);
    let mut g = Gaussian::new(SEED ^ 5);
    let names = ["Tamil Nadu", "Jammu and Kashmir", "a,b", "quote\"d", "Ladakh"];
    let mut failures = 0;
    for i in 0..100 {
        let n = 1 + rng.below(60) as usize;
        let d = 2 + rng.below(40) as usize;
        let unit = rng.below(2) == 0;
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| f64::from((10.0 * g.sample()) as f32)).collect())
            .collect();
        if unit {
            for r in &mut rows {
                let s = norm(r);
                r.iter_mut().for_each(|x| *x = f64::from((*x / s) as f32));
            }
        }
        let labels = (0..n)
            .map(|j| {
                let gender = [Gender::Male, Gender::Female, Gender::Unspecified][rng.below(3) as usize];
                RowLabel::new(names[rng.below(5) as usize], gender, format!("img-{i}-{j}"))
            })
            .collect();
        let set = EmbeddingSet::from_rows(&rows, labels).unwrap();
        let emb = dir.path().join(format!("{i}.emb1"));
        let lab = dir.path().join(format!("{i}.labels.csv"));
        save_embeddings(&set, &emb, &lab).unwrap();
        let back = load_embeddings(&emb, &lab).unwrap();
        let bits = |s: &EmbeddingSet| s.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&back) != bits(&set) || back.labels() != set.labels() || back.dim() != d {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} of 100 sets differ after save/load"))
}

#[test]
fn acceptance() {
    let bench = benchmark();
    let results = [
        ("projection algebra", projection_algebra()),
        ("INLP planted-direction recovery", inlp_recovery()),
        ("dispersion reduction", dispersion(&bench)),
        ("utility preservation", utility(&bench)),
        ("SLERP", slerp()),
        ("compensation", compensation()),
        ("JSD oracle values", jsd_oracles()),
        ("curation filters", curation()),
        ("SPARQL fidelity", sparql()),
        ("report schema fidelity", report_schema()),
        ("format round-trip", round_trip()),
    ];
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
