//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Run with `cargo test -p phonem-core --test acceptance`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use phonem::corpus::{
    load_manifest, save_manifest, simulate_annotators, stats, synth_corpus_with, AcousticTable, Corpus,
    DistributionTargets, GeneratorConfig, SplitMode, TherapeuticStep,
};
use phonem::features::{pitch_f0, power_spectrum, Dct, FeatureExtractor, FrameConfig};
use phonem::fuzzy::{centroid, crisp_label, from_posterior, similarity, EmotionAnchor, FuzzyEmotionState};
use phonem::hmm::{baum_welch, flat_start, log_forward, viterbi, GaussianState, Hmm, HmmConfig};
use phonem::recognizer::{compare_splits, extract_corpus, run_split, EvalReport, PriorMode, TrainConfig};
use phonem::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                o.pass = false;
            }
            o.detail.push_str(&format!("; {:.1} s (budget {} s)", took.as_secs_f64(), b.as_secs()));
        } else {
            o.detail.push_str(&format!("; {:.1} s", took.as_secs_f64()));
        }
        if !o.pass {
            self.failures += 1;
        }
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn gaussian_pdf_ln(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| -0.5 * ((2.0 * PI * v).ln() + (x - m).powi(2) / v))
        .sum()
}

fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| (x / s).ln()).collect()
}

fn random_model(rng: &mut impl Rng, n: usize, dim: usize) -> Hmm {
    let states = (0..n)
        .map(|_| {
            let mean = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let var = (0..dim).map(|_| rng.random_range(0.2..2.0)).collect();
            GaussianState::new(mean, var).unwrap()
        })
        .collect();
    let trans = (0..n).map(|_| random_simplex(rng, n)).collect();
    Hmm::new(random_simplex(rng, n), trans, states, false).unwrap()
}

/// Every state path with its joint log-probability.
fn enumerate_paths(h: &Hmm, obs: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let n = h.n_states();
    let t_len = obs.len();
    let mut out = Vec::new();
    for code in 0..n.pow(t_len as u32) {
        let mut path = Vec::with_capacity(t_len);
        let mut c = code;
        for _ in 0..t_len {
            path.push(c % n);
            c /= n;
        }
        let emit = |t: usize| {
            let s = &h.states()[path[t]];
            gaussian_pdf_ln(&obs[t], &s.mean, &s.var)
        };
        let mut lp = h.log_init()[path[0]] + emit(0);
        for t in 1..t_len {
            lp += h.log_trans()[path[t - 1]][path[t]] + emit(t);
        }
        out.push((path, lp));
    }
    out
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig { n_utterances: 1500, seed: 42, ..Default::default() };
    let corpus = synth_corpus_with(&cfg, dir.path(), Exec::default()).unwrap();
    let s = stats(&corpus).unwrap();
    let targets = DistributionTargets::default();
    let mut worst_step: f64 = 0.0;
    for step in TherapeuticStep::ALL {
        let got = s.step(step).as_array();
        for (g, t) in got.iter().zip(targets.step(step)) {
            worst_step = worst_step.max((g - t).abs());
        }
    }
    let overall = s.overall.as_array();
    let worst_overall =
        overall.iter().zip([0.12, 0.22, 0.66]).map(|(g, t)| (g - t).abs()).fold(0.0f64, f64::max);
    outcome(
        worst_step <= 0.03 && worst_overall <= 0.03,
        format!(
            "n={} max per-step deviation {worst_step:.4}, overall ({:.3}, {:.3}, {:.3}) deviation {worst_overall:.4} (limit 0.03)",
            corpus.len(),
            overall[0],
            overall[1],
            overall[2]
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_fwd: f64 = 0.0;
    let mut viterbi_mismatch = 0;
    for i in 0..100 {
        let n = 1 + i % 3;
        let t_len = 1 + (i / 3) % 6;
        let dim = 1 + i % 2;
        let h = random_model(&mut rng, n, dim);
        let obs: Vec<Vec<f64>> = (0..t_len).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let paths = enumerate_paths(&h, &obs);
        let scores: Vec<f64> = paths.iter().map(|p| p.1).collect();
        let (ll, _) = log_forward(&h, &obs).unwrap();
        worst_fwd = worst_fwd.max((ll - log_sum_exp(&scores)).abs());
        let best = paths.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let (vp, vs) = viterbi(&h, &obs).unwrap();
        if vp != best.0 || (vs - best.1).abs() > 1e-9 {
            viterbi_mismatch += 1;
        }
    }

    let mut worst_drop: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let seqs: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| {
                let len = rng.random_range(20..40);
                (0..len)
                    .map(|t| {
                        let centre = if t < len / 2 { -1.0 } else { 1.5 };
                        vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
                    })
                    .collect()
            })
            .collect();
        let init = flat_start(&seqs, 3).unwrap();
        let out = baum_welch(&init, &seqs, &HmmConfig { n_states: 3, max_iters: 15, rel_tol: 0.0 }).unwrap();
        for w in out.loglik_history.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let seqs: Vec<Vec<Vec<f64>>> = (0..5)
        .map(|_| (0..30).map(|_| vec![rng.random_range(-2.0..3.0), rng.random_range(0.0..1.0)]).collect())
        .collect();
    let all: Vec<&Vec<f64>> = seqs.iter().flatten().collect();
    let count = all.len() as f64;
    let mean: Vec<f64> = (0..2).map(|d| all.iter().map(|x| x[d]).sum::<f64>() / count).collect();
    let var: Vec<f64> = (0..2).map(|d| all.iter().map(|x| (x[d] - mean[d]).powi(2)).sum::<f64>() / count).collect();
    let single = baum_welch(&flat_start(&seqs, 1).unwrap(), &seqs, &HmmConfig { n_states: 1, max_iters: 3, rel_tol: 0.0 })
        .unwrap()
        .model;
    let s = &single.states()[0];
    let ml_err = s
        .mean
        .iter()
        .zip(&mean)
        .chain(s.var.iter().zip(&var))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    outcome(
        worst_fwd <= 1e-9 && viterbi_mismatch == 0 && worst_drop <= 1e-6 && ml_err <= 1e-9,
        format!(
            "forward vs enumeration {worst_fwd:.2e} (limit 1e-9), viterbi mismatches {viterbi_mismatch}/100, \
             largest Baum-Welch drop {worst_drop:.2e} over 50 seeds (slack 1e-6), single-state ML error {ml_err:.2e} (limit 1e-9)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n_fft = 512;
    let mut worst_dft: f64 = 0.0;
    for _ in 0..20 {
        let frame: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = power_spectrum(&frame, n_fft);
        for (k, p) in fast.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * i) as f64 / n_fft as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            worst_dft = worst_dft.max((p - (re * re + im * im) / n_fft as f64).abs());
        }
    }

    let mut worst_dct: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..26).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fast = Dct::new(26, 13).apply(&x);
        for (k, c) in fast.iter().enumerate() {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate() {
                acc += xi * (PI / 26.0 * (i as f64 + 0.5) * k as f64).cos();
            }
            let scale = if k == 0 { (1.0f64 / 26.0).sqrt() } else { (2.0f64 / 26.0).sqrt() };
            worst_dct = worst_dct.max((c - scale * acc).abs());
        }
    }

    let cfg = FrameConfig::default();
    let tone: Vec<f64> = (0..cfg.frame_len).map(|i| 0.5 * (2.0 * PI * 220.0 * i as f64 / 16_000.0).sin()).collect();
    let est = pitch_f0(&tone, &cfg, 16_000);
    let f0 = est.f0_hz.unwrap_or(f64::NAN);

    let signal: Vec<f64> = (0..16_000)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            0.3 * (2.0 * PI * 180.0 * t).sin() * (1.0 + t) + 0.05 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let m = FeatureExtractor::new(cfg.clone(), 16_000).unwrap().extract(&signal).unwrap();
    let worst_mean = (0..27)
        .map(|j| {
            let col = m.column(j);
            (col.iter().sum::<f64>() / col.len() as f64).abs()
        })
        .fold(0.0f64, f64::max);

    outcome(
        worst_dft <= 1e-8 && worst_dct <= 1e-10 && est.voiced && (f0 - 220.0).abs() <= 3.0 && worst_mean < 1e-9,
        format!(
            "FFT vs DFT {worst_dft:.2e} (limit 1e-8), DCT vs direct sum {worst_dct:.2e} (limit 1e-10), \
             220 Hz tone -> {f0:.2} Hz (+-3), largest CMVN column mean {worst_mean:.2e} (limit 1e-9)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_centroid: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for _ in 0..100 {
        let mut v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        v.sort_by(f64::total_cmp);
        let s = FuzzyEmotionState::new(v[0], v[1], v[2]).unwrap();
        let steps = 200_000;
        let h = (v[2] - v[0]) / steps as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=steps {
            let x = v[0] + h * i as f64;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let mu = s.membership(x);
            num += w * x * mu;
            den += w * mu;
        }
        let numeric = if den > 0.0 { num / den } else { v[1] };
        worst_centroid = worst_centroid.max((centroid(&s) - numeric).abs());

        let mut u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        u.sort_by(f64::total_cmp);
        let t = FuzzyEmotionState::new(u[0], u[1], u[2]).unwrap();
        worst_sym = worst_sym.max((similarity(&s, &t) - similarity(&t, &s)).abs());
    }
    let round_trip = EmotionAnchor::ALL.iter().all(|&a| {
        let mut p = [0.0; 5];
        p[a.index()] = 1.0;
        crisp_label(&from_posterior(&p).unwrap()) == a
    });
    outcome(
        worst_centroid <= 1e-6 && worst_sym <= 1e-9 && round_trip,
        format!(
            "centroid vs integration {worst_centroid:.2e} (limit 1e-6), similarity asymmetry {worst_sym:.2e} (limit 1e-9), \
             one-hot round trip {}",
            if round_trip { "exact for all 5" } else { "broken" }
        ),
    )
}

fn held_out(corpus: &Corpus, seed: u64) -> EvalReport {
    let cfg = TrainConfig::default();
    let features = extract_corpus(corpus, &cfg.frame, Exec::default()).unwrap();
    run_split(corpus, &features, &cfg, SplitMode::SpeakerDependent, 0.2, seed, 0.4, PriorMode::Uniform, Exec::default())
        .unwrap()
}

fn criterion_5(default_corpus: &Corpus) -> Outcome {
    let r = held_out(default_corpus, 42);
    let dir = tempfile::tempdir().unwrap();
    let boosted_cfg = GeneratorConfig {
        n_utterances: 600,
        seed: 42,
        p_disagree: 0.0,
        acoustics: AcousticTable::boosted(),
        ..Default::default()
    };
    let boosted = synth_corpus_with(&boosted_cfg, dir.path(), Exec::default()).unwrap();
    let b = held_out(&boosted, 42);
    outcome(
        r.accuracy_5 >= 0.55 && r.accuracy_valence >= 0.75 && b.accuracy_5 >= 0.90,
        format!(
            "default: 5-class {:.3} (>= 0.55), valence {:.3} (>= 0.75), argmax {:.3}; boosted: 5-class {:.3} (>= 0.90), argmax {:.3}",
            r.accuracy_5, r.accuracy_valence, r.accuracy_argmax, b.accuracy_5, b.accuracy_argmax
        ),
    )
}

fn criterion_6(default_corpus: &Corpus) -> Outcome {
    let seeds: Vec<u64> = (42..47).collect();
    let cmp = compare_splits(default_corpus, &TrainConfig::default(), 0.2, &seeds, 0.4, PriorMode::Uniform, Exec::default());
    match cmp {
        Ok(c) => {
            println!("{}", c.render_table().trim_end());
            let si = &c.speaker_independent;
            outcome(
                si.reports.len() == 5,
                format!(
                    "SI over 5 seeds: mean 5-class {:.3}, valence {:.3}; SD mean 5-class {:.3}; sd >= si: {} (reported, not asserted)",
                    si.mean_accuracy_5,
                    si.mean_accuracy_valence,
                    c.speaker_dependent.mean_accuracy_5,
                    c.sd_at_least_si()
                ),
            )
        }
        Err(e) => outcome(false, format!("comparison failed: {e}")),
    }
}

fn criterion_7() -> Outcome {
    let n = 10_000;
    let off = (0..n)
        .filter(|&i| {
            let anchor = EmotionAnchor::ALL[i % 5];
            let set = simulate_annotators(anchor, 3, 0.15, i as u64);
            set.labels().iter().any(|l| l.crisp_label() != anchor)
        })
        .count();
    let rate = off as f64 / n as f64;
    let expected = 1.0 - 0.85f64.powi(3);

    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig { n_utterances: 300, seed: 7, ..Default::default() };
    let corpus = synth_corpus_with(&cfg, dir.path(), Exec::default()).unwrap();
    let copy = dir.path().join("copy.jsonl");
    save_manifest(&corpus, &copy).unwrap();
    let back = load_manifest(&copy).unwrap();
    let bits = |c: &Corpus| -> Vec<Vec<[u64; 3]>> {
        c.records()
            .iter()
            .map(|r| r.labels.labels().iter().map(|l| l.triple().map(f64::to_bits)).collect())
            .collect()
    };
    let verbatim = bits(&corpus) == bits(&back) && back.records() == corpus.records();
    let all_kept = back.records().iter().all(|r| r.labels.labels().len() == 3);
    outcome(
        (rate - expected).abs() <= 0.02 && verbatim && all_kept,
        format!(
            "off-anchor rate {rate:.4} vs {expected:.4} (+-0.02); manifest round trip {}; every record keeps 3 labels: {all_kept}",
            if verbatim { "bit-exact" } else { "altered" }
        ),
    )
}

fn pipeline_json(seed: u64) -> String {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig { n_utterances: 600, seed, ..Default::default() };
    let corpus = synth_corpus_with(&cfg, dir.path(), Exec::default()).unwrap();
    held_out(&corpus, seed).to_json()
}

fn criterion_8() -> Outcome {
    let a = pipeline_json(42);
    let b = pipeline_json(42);
    outcome(a == b, format!("two synth -> train -> eval runs give {} EvalReport JSON ({} bytes)", if a == b { "byte-identical" } else { "different" }, a.len()))
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let mut r = Runner { failures: 0 };
    let secs = Duration::from_secs;
    r.run(1, "distribution reproduction", Some(secs(60)), criterion_1);
    r.run(2, "HMM correctness oracles", Some(secs(30)), criterion_2);
    r.run(3, "DSP oracles", None, criterion_3);
    r.run(4, "fuzzy-model oracles", None, criterion_4);

    let dir = tempfile::tempdir().unwrap();
    let default_cfg = GeneratorConfig { n_utterances: 600, n_subjects: 10, seed: 42, ..Default::default() };
    let start = Instant::now();
    let default_corpus = synth_corpus_with(&default_cfg, dir.path(), Exec::default()).unwrap();
    let synth_time = start.elapsed();
    r.run(5, "end-to-end learnability", Some(secs(300).saturating_sub(synth_time)), || criterion_5(&default_corpus));
    r.run(6, "speaker-independent mode", None, || criterion_6(&default_corpus));
    r.run(7, "multi-label integrity", None, criterion_7);
    r.run(8, "determinism", None, criterion_8);

    println!("{} of 8 criteria passed", 8 - r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
