//! End-to-end quality and correctness gates. Each test writes one
//! `[PASS]`/`[FAIL]` line to stderr (bypassing the capture harness) before
//! asserting.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use synopsis::captioner::{Captioner, CaptionerConfig};
use synopsis::corpus::{
    decode_features, encode_features, generate_synthetic, tokenize, Caption, Corpus, SyntheticSpec,
    Vocabulary,
};
use synopsis::diffcore::gradcheck::{check_inputs, check_params, worst, GradCheck};
use synopsis::diffcore::{
    bilstm, checkpoint, lstm_cell, rng_for, BiLstmParams, Graph, LstmParams, ParamStore, SeededRng,
    Tensor, Var,
};
use synopsis::metrics::{
    bleu2, lcs_len, multi_ref_f1, rouge_l, rouge_su4, Prf, BLEU_EPS, SKIP_SPAN,
};
use synopsis::pipeline::{
    build_vocabulary, evaluate, halving_bound, inference_trace, load_captioner, pretrain_captioner,
    train_joint, train_model, Model, PretrainReport, TrainConfig,
};
use synopsis::purport::{Purport, PurportConfig};
use synopsis::vlcmu::{bce_sum, pseudo_label, Vlcmu, VlcmuConfig};
use synopsis::Error;

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

// ---------------------------------------------------------------------------
// Shared training runs on the default synthetic corpus.

struct Run {
    corpus: Corpus,
    config: TrainConfig,
    pretrained: Model,
    pretrain: PretrainReport,
    /// Corpus generation, pretraining and held-out decoding.
    caption_time: Duration,
    exact: (usize, usize),
    full: Model,
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn run(seed: u64) -> &'static Run {
    static RUNS: [OnceLock<Run>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    RUNS[seed as usize].get_or_init(|| {
        let start = Instant::now();
        let corpus = generate_synthetic(&SyntheticSpec::new(seed)).unwrap();
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let (train, test) = corpus.split(config.holdout_videos).unwrap();
        let vocab = build_vocabulary(&train, config.min_count).unwrap();
        let mut model = Model::new(&config, corpus.frames, corpus.feature_dim, vocab).unwrap();
        let pretrain = pretrain_captioner(&mut model, &train).unwrap();
        let seen: HashSet<&Caption> = train
            .iter()
            .flat_map(|v| v.shots.iter().map(|s| &s.groundtruth))
            .collect();
        let mut exact = (0, 0);
        for shot in test.iter().flat_map(|v| v.shots.iter()) {
            if seen.contains(&shot.groundtruth) {
                exact.1 += 1;
                if model.decode(&shot.features).unwrap() == shot.groundtruth {
                    exact.0 += 1;
                }
            }
        }
        let caption_time = start.elapsed();
        let pretrained = model.clone();
        train_joint(&mut model, &train).unwrap();
        Run {
            corpus,
            config,
            pretrained,
            pretrain,
            caption_time,
            exact,
            full: model,
        }
    })
}

// ---------------------------------------------------------------------------

fn dims(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Every primitive and composite differentiable path against central
/// differences on one random configuration.
fn gradient_configuration(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = rng_for(seed, 31);
    let (m, n, k) = (
        dims(&mut rng, 1, 4),
        dims(&mut rng, 1, 4),
        dims(&mut rng, 1, 4),
    );
    let r = |rng: &mut SeededRng, shape: &[usize]| GradCheck::random(shape, rng);
    let mut out = Vec::new();
    let mut push = |name, err: f64| out.push((name, err));

    let a = r(&mut rng, &[m, k]);
    let b = r(&mut rng, &[k, n]);
    let c = r(&mut rng, &[m, k]);
    let v = r(&mut rng, &[k]);
    let w = r(&mut rng, &[k]);
    let s = r(&mut rng, &[]);
    let wm = r(&mut rng, &[m]);
    let target = rng.random_range(0..k);
    let sq = |g: &mut Graph, x: Var| -> synopsis::Result<Var> {
        // A non-linear scalar read-out so every output entry matters differently.
        let t = g.tanh(x)?;
        let y = g.mul(t, x)?;
        g.sum(y)
    };
    macro_rules! check {
        ($name:expr, $inputs:expr, $f:expr) => {
            push($name, check_inputs(&Vec::from($inputs), $f).unwrap())
        };
    }
    check!("matmul", [a.clone(), b.clone()], |g, x| {
        let y = g.matmul(x[0], x[1])?;
        sq(g, y)
    });
    check!("matmul_row", [v.clone(), b.clone()], |g, x| {
        let y = g.matmul(x[0], x[1])?;
        sq(g, y)
    });
    check!("add", [a.clone(), c.clone()], |g, x| {
        let y = g.add(x[0], x[1])?;
        sq(g, y)
    });
    check!("sub", [a.clone(), c.clone()], |g, x| {
        let y = g.sub(x[0], x[1])?;
        sq(g, y)
    });
    check!("mul", [a.clone(), c.clone()], |g, x| {
        let y = g.mul(x[0], x[1])?;
        sq(g, y)
    });
    check!("add_scalar", [a.clone(), s.clone()], |g, x| {
        let y = g.add_scalar(x[0], x[1])?;
        sq(g, y)
    });
    check!("scale", [a.clone()], |g, x| {
        let y = g.scale(x[0], -1.7)?;
        sq(g, y)
    });
    check!("sigmoid", [a.clone()], |g, x| {
        let y = g.sigmoid(x[0])?;
        sq(g, y)
    });
    check!("tanh", [a.clone()], |g, x| {
        let y = g.tanh(x[0])?;
        sq(g, y)
    });
    check!("softmax", [v.clone()], |g, x| {
        let y = g.softmax(x[0])?;
        let y = g.mul(y, x[0])?;
        g.sum(y)
    });
    check!("concat", [v.clone(), w.clone()], |g, x| {
        let y = g.concat(&[x[0], x[1], x[0]])?;
        sq(g, y)
    });
    check!("slice", [v.clone()], |g, x| {
        let y = g.slice(x[0], k / 2, k - k / 2)?;
        sq(g, y)
    });
    check!("row", [a.clone()], |g, x| {
        let y = g.row(x[0], m - 1)?;
        sq(g, y)
    });
    check!("stack", [v.clone(), w.clone()], |g, x| {
        let y = g.stack(&[x[1], x[0], x[1]])?;
        sq(g, y)
    });
    check!("scale_rows", [a.clone(), wm.clone()], |g, x| {
        let y = g.scale_rows(x[0], x[1])?;
        sq(g, y)
    });
    check!("mean_rows", [a.clone()], |g, x| {
        let y = g.mean_rows(x[0])?;
        sq(g, y)
    });
    check!("reshape", [a.clone()], |g, x| {
        let y = g.reshape(x[0], vec![m * k])?;
        let y = g.slice(y, 0, 1)?;
        sq(g, y)
    });
    check!("add_n", [v.clone(), w.clone()], |g, x| {
        let y = g.add_n(&[x[0], x[1], x[0]])?;
        sq(g, y)
    });
    check!("dot", [v.clone(), w.clone()], |g, x| {
        let y = g.dot(x[0], x[1])?;
        let z = g.mul(y, y)?;
        g.sum(z)
    });
    check!("cross_entropy", [v.clone()], |g, x| g
        .cross_entropy(x[0], target));
    check!("bce", [s.clone()], |g, x| {
        let p = g.sigmoid(x[0])?;
        let l1 = g.bce(p, 1.0)?;
        let l0 = g.bce(p, 0.0)?;
        let l0 = g.scale(l0, 0.3)?;
        g.add(l1, l0)
    });

    // Recurrent cells through inputs and parameters.
    let (d, h) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 3));
    let steps = dims(&mut rng, 1, 3);
    let mut store = ParamStore::new();
    let cell = LstmParams::new(&mut store, "cell", d, h, &mut rng).unwrap();
    let bi = BiLstmParams::new(&mut store, "bi", d, h, &mut rng).unwrap();
    let xs: Vec<Tensor> = (0..steps).map(|_| r(&mut rng, &[d])).collect();
    let h0 = r(&mut rng, &[h]);
    let c0 = r(&mut rng, &[h]);
    let mut cell_inputs = xs.clone();
    cell_inputs.push(h0.clone());
    cell_inputs.push(c0.clone());
    let st = store.clone();
    check!("lstm_cell", cell_inputs, |g, x| {
        let p = cell.bind(g, &st);
        let (hn, cn) = lstm_cell(g, x[0], x[steps], x[steps + 1], &p)?;
        let y = g.concat(&[hn, cn])?;
        sq(g, y)
    });
    check!("bilstm", xs.clone(), |g, x| {
        let p = bi.bind(g, &st);
        let o = bilstm(g, x, &p)?;
        let s = o.summary(g)?;
        let t = o.stacked(g)?;
        let a = sq(g, s)?;
        let b = sq(g, t)?;
        g.add(a, b)
    });
    let rep = check_params(&store, 8, |g, s| {
        let p = bi.bind(g, s);
        let inputs: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let o = bilstm(g, &inputs, &p)?;
        let y = o.summary(g)?;
        sq(g, y)
    })
    .unwrap();
    push("bilstm_params", worst(&rep));

    // Caption loss.
    let vocab = dims(&mut rng, 5, 8);
    let frames = dims(&mut rng, 1, 3);
    let fd = dims(&mut rng, 2, 3);
    let he = dims(&mut rng, 1, 2);
    let cc = CaptionerConfig {
        frame_dim: fd,
        frames,
        encoder_hidden: he,
        decoder_hidden: 2 * he,
        embedding: 2,
        vocab_size: vocab,
        max_decode_len: 4,
    };
    let mut store = ParamStore::new();
    let cap = Captioner::new(&mut store, cc, &mut rng).unwrap();
    let feats = r(&mut rng, &[frames, fd]);
    let caption: Vec<usize> = (0..dims(&mut rng, 1, 3))
        .map(|_| rng.random_range(4..vocab))
        .collect();
    let rep = check_params(&store, 6, |g, s| {
        let v = cap.bind(g, s);
        let x = g.constant(feats.clone());
        v.loss(g, x, &caption)
    })
    .unwrap();
    push("caption_loss", worst(&rep));

    // Correctness loss through both matcher branches.
    let vc = VlcmuConfig {
        frame_dim: fd,
        vocab_size: vocab,
        embedding: 2,
        visual_hidden: dims(&mut rng, 1, 2),
        language_hidden: 0,
    };
    let vc = VlcmuConfig {
        language_hidden: vc.visual_hidden,
        ..vc
    };
    let mut store = ParamStore::new();
    let vl = Vlcmu::new(&mut store, vc, &mut rng).unwrap();
    let pc = PurportConfig {
        input: vc.feature_dim(),
        hidden: dims(&mut rng, 1, 2),
    };
    let pp = Purport::new(&mut store, pc, &mut rng).unwrap();
    let n_shots = dims(&mut rng, 1, 3);
    let shots: Vec<(Tensor, Vec<usize>)> = (0..n_shots)
        .map(|_| {
            let len = dims(&mut rng, 1, 3);
            (
                r(&mut rng, &[frames, fd]),
                (0..len).map(|_| rng.random_range(3..vocab)).collect(),
            )
        })
        .collect();
    let eta: Vec<u8> = (0..n_shots).map(|_| rng.random_range(0..2)).collect();
    let phi: Vec<u8> = (0..n_shots).map(|_| rng.random_range(0..2)).collect();
    let rep = check_params(&store, 6, |g, s| {
        let v = vl.bind(g, s);
        let mut alpha = Vec::new();
        for (x, ids) in &shots {
            let x = g.constant(x.clone());
            alpha.push(v.forward(g, x, ids)?.alpha);
        }
        bce_sum(g, &alpha, &eta)
    })
    .unwrap();
    push("correctness_loss", worst(&rep));
    let rep = check_params(&store, 6, |g, s| {
        let v = vl.bind(g, s);
        let p = pp.bind(g, s);
        let mut feats = Vec::new();
        for (x, ids) in &shots {
            let x = g.constant(x.clone());
            feats.push(v.forward(g, x, ids)?.feature);
        }
        let beta = p.score(g, &feats)?;
        bce_sum(g, &beta, &phi)
    })
    .unwrap();
    push("significance_loss", worst(&rep));

    // Joint objective of a full model with the captioner frozen.
    let spec = SyntheticSpec {
        videos: 1,
        shots_per_video: n_shots + 1,
        events: 2,
        feature_dim: fd,
        frames_per_shot: frames,
        templates: Vec::new(),
        ..SyntheticSpec::new(seed)
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let video = &corpus.videos[0];
    let vocab = Vocabulary::build(video.shots.iter().map(|s| &s.groundtruth), 1).unwrap();
    let tc = TrainConfig {
        seed,
        lambda1: rng.random_range(0.1..2.0),
        lambda2: rng.random_range(0.1..2.0),
        encoder_hidden: 1,
        embedding: 2,
        max_decode_len: 3,
        vlcmu_hidden: 1,
        vlcmu_embedding: 2,
        purport_hidden: 1,
        ..TrainConfig::default()
    };
    for (name, config) in [
        ("joint_objective", tc.clone()),
        (
            "joint_objective_without_matcher",
            TrainConfig {
                disable_vlcmu: true,
                ..tc.clone()
            },
        ),
    ] {
        let mut model =
            Model::new(&config, corpus.frames, corpus.feature_dim, vocab.clone()).unwrap();
        model.store.set_frozen_prefix("captioner", true);
        let input = model.joint_input(video).unwrap();
        let rep = check_params(&model.store, 4, |g, s| {
            Ok(model.joint_objective(g, s, &input)?.loss)
        })
        .unwrap();
        push(name, worst(&rep));
    }
    out
}

#[test]
fn gradient_suite_matches_finite_differences() {
    let start = Instant::now();
    let mut worst_seen: (f64, &str, u64) = (0.0, "", 0);
    let mut checks = 0;
    for seed in 0..20 {
        for (name, err) in gradient_configuration(seed) {
            checks += 1;
            if err > worst_seen.0 {
                worst_seen = (err, name, seed);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_seen.0 < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        "gradient suite",
        pass,
        &format!(
            "{checks} checks over 20 configurations, worst relative error {:.2e} ({} seed {}), {:.1}s",
            worst_seen.0,
            worst_seen.1,
            worst_seen.2,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------

fn brute_label(generated: &[usize], groundtruth: &[usize]) -> u8 {
    let mut hits = 0;
    for g in generated {
        let mut found = false;
        for t in groundtruth {
            found |= g == t;
        }
        hits += usize::from(found);
    }
    u8::from(!generated.is_empty() && hits as f64 > generated.len() as f64 / 2.0)
}

fn words(ids: &[usize]) -> Caption {
    Caption::new(ids.iter().map(|i| format!("w{i}")).collect())
}

#[test]
fn pseudo_labels_match_membership_oracle() {
    let mut rng = rng_for(2, 0);
    let mut disagreements = 0;
    let mut boundary = 0;
    let mut pairs = 0;
    for i in 0..1000 {
        let gl = rng.random_range(1..=12);
        let tl = rng.random_range(1..=12);
        let gt: Vec<usize> = (0..tl).map(|_| rng.random_range(0..10)).collect();
        let gen: Vec<usize> = if i % 4 == 0 {
            // Exactly half (or half plus one) of an even-length sentence matches.
            let n = 2 * rng.random_range(1..=6);
            let miss: Vec<usize> = (0..10).filter(|t| !gt.contains(t)).collect();
            if miss.is_empty() {
                continue;
            }
            let matched = n / 2 + usize::from(i % 8 == 0);
            boundary += 1;
            (0..n)
                .map(|j| {
                    if j < matched {
                        gt[rng.random_range(0..gt.len())]
                    } else {
                        miss[rng.random_range(0..miss.len())]
                    }
                })
                .collect()
        } else {
            (0..gl).map(|_| rng.random_range(0..10)).collect()
        };
        pairs += 1;
        if pseudo_label(&words(&gen), &words(&gt)) != brute_label(&gen, &gt) {
            disagreements += 1;
        }
    }
    report(
        "pseudo-label oracle",
        disagreements == 0 && pairs >= 1000 - 10,
        &format!("{pairs} pairs ({boundary} at the half boundary), {disagreements} disagreements"),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn peak_inference_invariants() {
    let mut rng = rng_for(3, 0);
    let mut violations = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(1..=500);
        let series: Vec<f64> = if case % 3 == 0 {
            (0..n)
                .map(|_| f64::from(rng.random_range(0..4u8)))
                .collect()
        } else {
            (0..n).map(|_| rng.random::<f64>()).collect()
        };
        let trace = inference_trace(&series, rng.random_range(1..=6)).unwrap();
        let mut prev: Vec<usize> = (0..n).collect();
        for kept in &trace {
            let pos: Option<Vec<usize>> = kept
                .iter()
                .map(|k| prev.iter().position(|p| p == k))
                .collect();
            let ok = match pos {
                Some(pos) => {
                    !kept.is_empty()
                        && kept.len() <= prev.len().div_ceil(2)
                        && pos.windows(2).all(|w| w[1] > w[0] + 1)
                }
                None => false,
            };
            if !ok {
                violations.push(case);
            }
            prev = kept.clone();
        }
    }
    let long: Vec<f64> = (0..3000).map(|_| rng.random::<f64>()).collect();
    let survivors = inference_trace(&long, 4).unwrap().pop().unwrap().len();
    let pass = violations.is_empty() && survivors <= 188 && halving_bound(3000, 4) == 188;
    report(
        "peak inference invariants",
        pass,
        &format!(
            "1000 series, {} violations; 3000-shot series keeps {survivors} after 4 passes ({:.1}%)",
            violations.len(),
            100.0 * survivors as f64 / 3000.0
        ),
    );
}

// ---------------------------------------------------------------------------

/// All sequences over `{0, 1, 2}` of length at most 8, ordered by length.
fn all_sequences() -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut start = 0;
    for _ in 0..8 {
        let end = out.len();
        for i in start..end {
            for t in 0..3 {
                let mut s = out[i].clone();
                s.push(t);
                out.push(s);
            }
        }
        start = end;
    }
    out
}

/// Brute-force LCS for every pair: the set of all subsequences of each
/// sequence as a bitset over the sequence list; the longest member of the
/// intersection gives the LCS length.
fn lcs_oracle_disagreements() -> (usize, usize) {
    let seqs = all_sequences();
    let index: HashMap<&[u8], usize> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_slice(), i))
        .collect();
    let words = seqs.len().div_ceil(64);
    let mut subsets = vec![0u64; seqs.len() * words];
    for (i, s) in seqs.iter().enumerate() {
        for mask in 0u32..(1 << s.len()) {
            let sub: Vec<u8> = (0..s.len())
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| s[b])
                .collect();
            let j = index[sub.as_slice()];
            subsets[i * words + j / 64] |= 1 << (j % 64);
        }
    }
    let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let chunk = seqs.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (seqs, subsets, lens) = (&seqs, &subsets, &lens);
                scope.spawn(move || {
                    let mut bad = 0;
                    let mut pairs = 0;
                    for a in t * chunk..((t + 1) * chunk).min(seqs.len()) {
                        let sa = &subsets[a * words..(a + 1) * words];
                        for b in a..seqs.len() {
                            let sb = &subsets[b * words..(b + 1) * words];
                            let mut best = 0;
                            for w in (0..words).rev() {
                                let both = sa[w] & sb[w];
                                if both != 0 {
                                    best = lens[w * 64 + 63 - both.leading_zeros() as usize];
                                    break;
                                }
                            }
                            pairs += 1;
                            let dp = lcs_len(&seqs[a], &seqs[b]);
                            let p = rouge_l(&seqs[a], &seqs[b]);
                            let expect = if lens[a] == 0 || lens[b] == 0 {
                                Prf::default()
                            } else {
                                Prf::new(best as f64 / lens[a] as f64, best as f64 / lens[b] as f64)
                            };
                            if dp != best || p != expect {
                                bad += 1;
                            }
                        }
                    }
                    (bad, pairs)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
    })
}

/// Every unigram and skip-bigram, listed explicitly and matched one to one.
fn brute_su4(c: &[u8], r: &[u8]) -> Prf {
    let units = |s: &[u8]| {
        let mut u: Vec<Vec<u8>> = s.iter().map(|&t| vec![t]).collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                if j - i <= SKIP_SPAN {
                    u.push(vec![s[i], s[j]]);
                }
            }
        }
        u
    };
    let (cu, ru) = (units(c), units(r));
    let mut used = vec![false; ru.len()];
    let mut overlap = 0;
    for x in &cu {
        if let Some(k) = (0..ru.len()).find(|&k| !used[k] && ru[k] == *x) {
            used[k] = true;
            overlap += 1;
        }
    }
    if cu.is_empty() || ru.is_empty() {
        return Prf::default();
    }
    Prf::new(
        overlap as f64 / cu.len() as f64,
        overlap as f64 / ru.len() as f64,
    )
}

#[test]
fn metric_oracles() {
    let (lcs_bad, lcs_pairs) = lcs_oracle_disagreements();

    let mut rng = rng_for(4, 0);
    let mut su4_bad = 0;
    for _ in 0..500 {
        let c: Vec<u8> = (0..rng.random_range(1..=7))
            .map(|_| rng.random_range(0..4))
            .collect();
        let r: Vec<u8> = (0..rng.random_range(1..=7))
            .map(|_| rng.random_range(0..4))
            .collect();
        let (a, b) = (rouge_su4(&c, &r), brute_su4(&c, &r));
        let close = (a.precision - b.precision).abs() < 1e-12
            && (a.recall - b.recall).abs() < 1e-12
            && (a.f1 - b.f1).abs() < 1e-12;
        su4_bad += usize::from(!close);
    }

    let t = |s: &str| tokenize(s);
    let same = vec![t("the cat sat on the mat"), t("a dog ran")];
    let b_same = bleu2(&same, &same).unwrap();
    let b_swap = bleu2(&[t("b a")], &[t("a b")]).unwrap();
    let b_short = bleu2(&[t("the cat")], &[t("the cat sat")]).unwrap();
    let bleu_ok = (b_same - 1.0).abs() < 1e-9
        && (b_swap - BLEU_EPS.sqrt()).abs() < 1e-9
        && (b_short - (-0.5f64).exp()).abs() < 1e-9;

    let refs = vec![t("x y"), t("a b c"), t("p q")];
    let multi_ok = (multi_ref_f1(&t("a b c"), &refs, rouge_l) - 1.0 / 3.0).abs() < 1e-12;

    report(
        "metric oracles",
        lcs_bad == 0 && su4_bad == 0 && bleu_ok && multi_ok,
        &format!(
            "LCS/ROUGE-L {lcs_bad} mismatches over {lcs_pairs} pairs; ROUGE-SU4 {su4_bad} of 500; \
             BLEU-2 examples {b_same:.9}, {b_swap:.3e}, {b_short:.9}"
        ),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn captioner_learns_default_corpus() {
    let run = run(0);
    let initial = run.pretrain.initial_train_loss;
    let last = run.pretrain.final_train_loss();
    let reduction = 1.0 - last / initial;
    let exact = run.exact.0 as f64 / run.exact.1 as f64;
    let (train, _) = run.corpus.split(run.config.holdout_videos).unwrap();
    let vocab = run.pretrained.vocab.len();
    let pass = train.len() == 20
        && train.iter().all(|v| v.len() == 60)
        && vocab <= 60
        && reduction >= 0.9
        && exact >= 0.8
        && run.caption_time < Duration::from_secs(600);
    report(
        "captioner learning",
        pass,
        &format!(
            "caption loss {initial:.3} -> {last:.4} ({:.1}% lower), exact match {}/{} ({:.1}%), vocab {vocab}, {:.1}s",
            100.0 * reduction,
            run.exact.0,
            run.exact.1,
            100.0 * exact,
            run.caption_time.as_secs_f64()
        ),
    );
}

#[test]
fn correctness_scores_separate_corrupted_captions() {
    let run = run(0);
    let (_, test) = run.corpus.split(run.config.holdout_videos).unwrap();
    let (mut clean, mut corrupted) = (Vec::new(), Vec::new());
    for video in &test {
        let scores = run.full.score_video(video).unwrap();
        for (shot, s) in video.shots.iter().zip(&scores) {
            if shot.injected.is_some() {
                corrupted.push(s.alpha);
            } else {
                clean.push(s.alpha);
            }
        }
    }
    let rate = corrupted.len() as f64 / (clean.len() + corrupted.len()) as f64;
    let auc = common::roc_auc(&clean, &corrupted);
    report(
        "correctness discrimination",
        auc >= 0.9,
        &format!(
            "ROC-AUC {auc:.4} over {} clean and {} corrupted held-out shots ({:.1}% corrupted)",
            clean.len(),
            corrupted.len(),
            100.0 * rate
        ),
    );
}

#[test]
fn synopsis_recalls_important_events() {
    let run = run(0);
    let (_, test) = run.corpus.split(run.config.holdout_videos).unwrap();
    let (mut ours, mut random, mut videos) = (0.0, 0.0, 0);
    let mut rows = Vec::new();
    for video in &test {
        let (synopsis, _) = run.full.synopsis(video, 4).unwrap();
        let shots = synopsis.shots();
        let (Some(r), Some(b)) = (
            common::event_recall(video, &shots),
            common::random_recall(video, shots.len(), 1000, 0),
        ) else {
            continue;
        };
        rows.push(format!("{} {:.2}/{:.2}", video.id, r, b));
        ours += r;
        random += b;
        videos += 1;
    }
    let ratio = ours / random;
    report(
        "synopsis event recall",
        videos > 0 && ratio >= 2.0,
        &format!(
            "mean recall {:.3} vs random {:.3} (x{ratio:.2}) over {videos} videos [{}]",
            ours / videos as f64,
            random / videos as f64,
            rows.join(", ")
        ),
    );
}

fn mean_su4(model: &Model, corpus: &Corpus, holdout: usize) -> f64 {
    let (_, test) = corpus.split(holdout).unwrap();
    let mut total = 0.0;
    for video in &test {
        let (synopsis, _) = model.synopsis(video, 4).unwrap();
        let refs: Vec<Vec<String>> = video.references.iter().map(|r| tokenize(r)).collect();
        total += multi_ref_f1(&tokenize(&synopsis.text()), &refs, rouge_su4);
    }
    total / test.len() as f64
}

#[test]
fn ablations_do_not_beat_the_full_model() {
    let names = ["-VLCMU", "-L_eta", "-Purport"];
    let per_seed: Vec<[f64; 4]> = std::thread::scope(|scope| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let run = run(seed);
                    let (train, _) = run.corpus.split(run.config.holdout_videos).unwrap();
                    let mut row = [
                        mean_su4(&run.full, &run.corpus, run.config.holdout_videos),
                        0.0,
                        0.0,
                        0.0,
                    ];
                    let switches = [
                        (true, false, false),
                        (false, true, false),
                        (false, false, true),
                    ];
                    for (i, (v, e, p)) in switches.into_iter().enumerate() {
                        let config = TrainConfig {
                            disable_vlcmu: v,
                            disable_eta_loss: e,
                            disable_purport: p,
                            ..run.config.clone()
                        };
                        let mut model = Model::new(
                            &config,
                            run.corpus.frames,
                            run.corpus.feature_dim,
                            run.pretrained.vocab.clone(),
                        )
                        .unwrap();
                        load_captioner(&mut model, &run.pretrained.store).unwrap();
                        train_joint(&mut model, &train).unwrap();
                        row[i + 1] = mean_su4(&model, &run.corpus, run.config.holdout_videos);
                    }
                    row
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mean: Vec<f64> = (0..4)
        .map(|j| per_seed.iter().map(|r| r[j]).sum::<f64>() / per_seed.len() as f64)
        .collect();
    let holds = (1..4).filter(|&j| mean[0] >= mean[j]).count();
    let detail = format!(
        "seed-averaged ROUGE-SU4 F1 full {:.4}, {} {:.4}, {} {:.4}, {} {:.4}; full >= ablation in {holds}/3 [{}]",
        mean[0],
        names[0],
        mean[1],
        names[1],
        mean[2],
        names[2],
        mean[3],
        per_seed
            .iter()
            .map(|r| format!("{:.3}/{:.3}/{:.3}/{:.3}", r[0], r[1], r[2], r[3]))
            .collect::<Vec<_>>()
            .join(", ")
    );
    report("ablation ordering", holds >= 2, &detail);
}

// ---------------------------------------------------------------------------

fn corrupt_cases(bytes: &[u8]) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = (0..bytes.len()).map(|n| bytes[..n].to_vec()).collect();
    let mut longer = bytes.to_vec();
    longer.push(0);
    out.push(longer);
    for i in 0..bytes.len().min(24) {
        let mut flipped = bytes.to_vec();
        flipped[i] ^= 0xff;
        out.push(flipped);
    }
    out
}

#[test]
fn determinism_and_file_formats() {
    let corpus = common::small_corpus(21);
    let config = common::small_config(21);
    let a = train_model(&corpus, &config).unwrap().model;
    let b = train_model(&corpus, &config).unwrap().model;
    let same_ckpt = checkpoint::encode(&a.store).unwrap() == checkpoint::encode(&b.store).unwrap();

    let (_, test) = corpus.split(config.holdout_videos).unwrap();
    let synopses = |m: &Model| {
        test.iter()
            .map(|v| m.synopsis(v, 4).unwrap().0)
            .collect::<Vec<_>>()
    };
    let (sa, sb) = (synopses(&a), synopses(&b));
    let refs: BTreeMap<String, Vec<String>> = test
        .iter()
        .map(|v| (v.id.clone(), v.references.clone()))
        .collect();
    let ra = serde_json::to_vec(&evaluate(&sa, &refs).unwrap()).unwrap();
    let rb = serde_json::to_vec(&evaluate(&sb, &refs).unwrap()).unwrap();
    let same_synopsis = serde_json::to_vec(&sa).unwrap() == serde_json::to_vec(&sb).unwrap();
    let same_report = ra == rb;

    let ckpt = checkpoint::encode(&a.store).unwrap();
    let back = checkpoint::decode(&ckpt).unwrap();
    let ckpt_exact = back.len() == a.store.len()
        && back
            .iter()
            .zip(a.store.iter())
            .all(|((_, x), (_, y))| x.name == y.name && x.value.bit_eq(&y.value));

    let mut feats = GradCheck::random(&[3, 2, 4], &mut rng_for(21, 1));
    feats.data_mut()[0] = -0.0;
    feats.data_mut()[1] = f64::MIN_POSITIVE / 2.0;
    let fbytes = encode_features(&feats).unwrap();
    let feat_exact = decode_features(&fbytes).unwrap().bit_eq(&feats);

    let mut small = ParamStore::new();
    small
        .add("w", GradCheck::random(&[2, 3], &mut rng_for(21, 2)))
        .unwrap();
    let small_bytes = checkpoint::encode(&small).unwrap();
    let formats = |r: synopsis::Result<()>| matches!(r, Err(Error::Format { .. }));
    let mut rejected = 0;
    let mut cases = 0;
    for bad in corrupt_cases(&small_bytes) {
        if bad == small_bytes {
            continue;
        }
        cases += 1;
        let outcome = std::panic::catch_unwind(|| checkpoint::decode(&bad).map(|_| ()));
        rejected += usize::from(outcome.is_ok_and(|r| r.is_ok() || formats(r)));
    }
    let mut feat_cases = 0;
    let mut feat_rejected = 0;
    for bad in corrupt_cases(&fbytes) {
        if bad == fbytes {
            continue;
        }
        feat_cases += 1;
        let outcome = std::panic::catch_unwind(|| decode_features(&bad).map(|_| ()));
        feat_rejected += usize::from(outcome.is_ok_and(|r| r.is_ok() || formats(r)));
    }
    // Structural corruptions (truncation, extension, header damage) must be errors;
    // flipping a payload byte may still decode to a different finite value.
    let structural =
        |bytes: &[u8], header: usize, decode: &dyn Fn(&[u8]) -> synopsis::Result<()>| {
            let mut longer = bytes.to_vec();
            longer.push(0);
            (0..bytes.len()).all(|n| formats(decode(&bytes[..n])))
                && formats(decode(&longer))
                && (0..header).all(|i| {
                    let mut flipped = bytes.to_vec();
                    flipped[i] ^= 0xff;
                    formats(decode(&flipped))
                })
        };
    // Magic, version and count for checkpoints; magic, version and N, k, d for features.
    let truncations_fail = structural(&small_bytes, 12, &|b| checkpoint::decode(b).map(|_| ()))
        && structural(&fbytes, 20, &|b| decode_features(b).map(|_| ()));

    let pass = same_ckpt
        && same_synopsis
        && same_report
        && ckpt_exact
        && feat_exact
        && rejected == cases
        && feat_rejected == feat_cases
        && truncations_fail;
    report(
        "determinism and formats",
        pass,
        &format!(
            "checkpoints {same_ckpt}, synopses {same_synopsis}, reports {same_report}, round trips {ckpt_exact}/{feat_exact}, \
             {rejected}/{cases} checkpoint and {feat_rejected}/{feat_cases} feature corruptions handled without panics, structural corruptions rejected {truncations_fail}"
        ),
    );
}
