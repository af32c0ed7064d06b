//! Shared oracles for integration and acceptance tests.
#![allow(dead_code)]

use rand::Rng as _;
use selfal::nn::{Graph, Tensor, Var};
use selfal::seed::{rng_from, Rng};
use selfal::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-3;

/// Gradient norms below this are treated as zero: f32 storage leaves
/// analytically vanishing gradients at around 1e-9.
pub const GRAD_NORM_FLOOR: f64 = 1e-4;

/// `‖a − b‖ / max(‖a‖, ‖b‖, GRAD_NORM_FLOOR)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(GRAD_NORM_FLOOR)
}

pub fn uniform(rng: &mut Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;
type Reference = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

/// One differentiable operation on fixed inputs, with an independent f64
/// implementation of the same function.
pub struct GradCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub build: Build,
    pub reference: Reference,
}

/// Result of [`check_case`].
pub struct CaseCheck {
    /// One relative error per input.
    pub errors: Vec<f64>,
    /// Largest absolute difference between the op and its reference.
    pub forward_gap: f64,
}

/// Analytic gradients of `⟨op(inputs), R⟩` for a fixed random projection
/// `R`, against central differences of `⟨reference(inputs), R⟩` taken in
/// f64.
pub fn check_case(case: &GradCase, seed: u64, step: f64) -> Result<CaseCheck> {
    let mut g = Graph::new();
    let vars = case.inputs.iter().map(|x| g.param(x)).collect::<Result<Vec<_>>>()?;
    let out = (case.build)(&mut g, &vars)?;
    let shape = g.shape(out).to_vec();
    let proj = uniform(&mut rng_from(seed ^ 0x5eed), &shape, -1.0, 1.0);
    let r = g.constant(&proj)?;
    let weighted = g.mul(out, r)?;
    let loss = g.sum(weighted)?;
    g.backward(loss)?;

    let mut xs: Vec<Vec<f64>> =
        case.inputs.iter().map(|t| t.data().iter().map(|&v| f64::from(v)).collect()).collect();
    let reference = (case.reference)(&xs);
    let forward_gap = g
        .value(out)
        .data()
        .iter()
        .zip(&reference)
        .map(|(&a, b)| (f64::from(a) - b).abs())
        .fold(if reference.len() == g.value(out).numel() { 0.0 } else { f64::INFINITY }, f64::max);
    let project = |v: &[f64]| -> f64 { v.iter().zip(proj.data()).map(|(a, &b)| a * f64::from(b)).sum() };

    let mut errors = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let analytic: Vec<f64> = g
            .grad(vars[i])
            .map(|gr| gr.iter().map(|&x| f64::from(x)).collect())
            .unwrap_or_else(|| vec![0.0; xs[i].len()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..xs[i].len() {
            let orig = xs[i][j];
            xs[i][j] = orig + step;
            let up = project(&(case.reference)(&xs));
            xs[i][j] = orig - step;
            let down = project(&(case.reference)(&xs));
            xs[i][j] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
        errors.push(rel_error(&analytic, &numeric));
    }
    Ok(CaseCheck { errors, forward_gap })
}

fn ref_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
        }
    }
    out
}

fn ref_transpose(x: &[f64], r: usize, c: usize) -> Vec<f64> {
    (0..c * r).map(|i| x[(i % r) * c + i / r]).collect()
}

fn ref_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn ref_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn ref_layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for row in out.chunks_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + 1e-5).sqrt();
        for (i, x) in row.iter_mut().enumerate() {
            *x = (*x - mean) * rs * g[i] + b[i];
        }
    }
    out
}

/// Multi-head attention over `[batch·seq × hidden]` with a key mask.
fn ref_attention(q: &[f64], k: &[f64], v: &[f64], valid: &[bool], batch: usize, heads: usize, hidden: usize) -> Vec<f64> {
    let seq = q.len() / hidden / batch;
    let d = hidden / heads;
    let mut out = vec![0.0; q.len()];
    for b in 0..batch {
        for h in 0..heads {
            for i in 0..seq {
                let qi = (b * seq + i) * hidden + h * d;
                let scores: Vec<f64> = (0..seq)
                    .map(|j| {
                        if valid[b * seq + j] {
                            let kj = (b * seq + j) * hidden + h * d;
                            (0..d).map(|c| q[qi + c] * k[kj + c]).sum::<f64>() / (d as f64).sqrt()
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let p = ref_softmax(&scores);
                for j in 0..seq {
                    let vj = (b * seq + j) * hidden + h * d;
                    for c in 0..d {
                        out[qi + c] += p[j] * v[vj + c];
                    }
                }
            }
        }
    }
    out
}

fn ref_cross_entropy(x: &[f64], v: usize, targets: &[i64], ignore: i64, denom: Option<f64>) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (r, &t) in targets.iter().enumerate() {
        if t == ignore {
            continue;
        }
        let row = &x[r * v..(r + 1) * v];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total += m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() - row[t as usize];
        count += 1;
    }
    total / denom.unwrap_or(count.max(1) as f64)
}

/// Every differentiable operation on small random inputs drawn from `seed`.
pub fn op_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = rng_from(seed);
    let mut u = |shape: &[usize], lo: f32, hi: f32| uniform(&mut rng, shape, lo, hi);
    let mut cases = Vec::new();
    let mut case = |name, inputs, build: Build, reference: Reference| {
        cases.push(GradCase { name, inputs, build, reference })
    };
    case(
        "matmul",
        vec![u(&[3, 4], -1.0, 1.0), u(&[4, 2], -1.0, 1.0)],
        Box::new(|g, v| g.matmul(v[0], v[1])),
        Box::new(|x| ref_matmul(&x[0], &x[1], 3, 4, 2)),
    );
    case(
        "matmul_nt",
        vec![u(&[3, 4], -1.0, 1.0), u(&[2, 4], -1.0, 1.0)],
        Box::new(|g, v| g.matmul_nt(v[0], v[1])),
        Box::new(|x| ref_matmul(&x[0], &ref_transpose(&x[1], 2, 4), 3, 4, 2)),
    );
    case(
        "add",
        vec![u(&[2, 3], -1.0, 1.0), u(&[2, 3], -1.0, 1.0)],
        Box::new(|g, v| g.add(v[0], v[1])),
        Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a + b).collect()),
    );
    case(
        "add_bias",
        vec![u(&[4, 3], -1.0, 1.0), u(&[3], -1.0, 1.0)],
        Box::new(|g, v| g.add_bias(v[0], v[1])),
        Box::new(|x| x[0].iter().enumerate().map(|(i, a)| a + x[1][i % 3]).collect()),
    );
    case(
        "mul",
        vec![u(&[3, 3], -1.0, 1.0), u(&[3, 3], -1.0, 1.0)],
        Box::new(|g, v| g.mul(v[0], v[1])),
        Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a * b).collect()),
    );
    case(
        "scale",
        vec![u(&[2, 4], -1.0, 1.0)],
        Box::new(|g, v| g.scale(v[0], -1.7)),
        Box::new(|x| x[0].iter().map(|a| a * f64::from(-1.7f32)).collect()),
    );
    case(
        "sum",
        vec![u(&[4, 4], -1.0, 1.0)],
        Box::new(|g, v| g.sum(v[0])),
        Box::new(|x| vec![x[0].iter().sum()]),
    );
    case(
        "weighted_sum",
        vec![u(&[1], -1.0, 1.0), u(&[1], -1.0, 1.0), u(&[1], -1.0, 1.0)],
        Box::new(|g, v| g.weighted_sum(&[(v[0], 0.5), (v[1], -2.0), (v[2], 1.25)])),
        Box::new(|x| vec![0.5 * x[0][0] - 2.0 * x[1][0] + 1.25 * x[2][0]]),
    );
    case(
        "reshape",
        vec![u(&[2, 6], -1.0, 1.0)],
        Box::new(|g, v| g.reshape(v[0], &[3, 4])),
        Box::new(|x| x[0].clone()),
    );
    case(
        "gelu",
        vec![u(&[4, 4], -3.0, 3.0)],
        Box::new(|g, v| g.gelu(v[0])),
        Box::new(|x| x[0].iter().map(|&a| ref_gelu(a)).collect()),
    );
    case(
        "softmax_rows",
        vec![u(&[3, 4], -2.0, 2.0)],
        Box::new(|g, v| g.softmax(v[0], 1)),
        Box::new(|x| x[0].chunks(4).flat_map(ref_softmax).collect()),
    );
    case(
        "softmax_cols",
        vec![u(&[3, 4], -2.0, 2.0)],
        Box::new(|g, v| g.softmax(v[0], 0)),
        Box::new(|x| ref_transpose(&ref_transpose(&x[0], 3, 4).chunks(3).flat_map(ref_softmax).collect::<Vec<_>>(), 4, 3)),
    );
    case(
        "layer_norm",
        vec![u(&[3, 4], -2.0, 2.0), u(&[4], 0.5, 1.5), u(&[4], -1.0, 1.0)],
        Box::new(|g, v| g.layer_norm(v[0], v[1], v[2])),
        Box::new(|x| ref_layer_norm(&x[0], 4, &x[1], &x[2])),
    );
    case(
        "embedding",
        vec![u(&[4, 3], -1.0, 1.0)],
        Box::new(|g, v| g.embedding(v[0], &[2, 0, 2, 3])),
        Box::new(|x| [2usize, 0, 2, 3].iter().flat_map(|&r| x[0][r * 3..(r + 1) * 3].to_vec()).collect()),
    );
    case(
        "gather_rows",
        vec![u(&[4, 3], -1.0, 1.0)],
        Box::new(|g, v| g.gather_rows(v[0], &[3, 1, 3])),
        Box::new(|x| [3usize, 1, 3].iter().flat_map(|&r| x[0][r * 3..(r + 1) * 3].to_vec()).collect()),
    );
    // The reference reads the keep mask off the op applied to ones.
    let mask: Vec<f64> = {
        let mut g = Graph::new();
        let ones = g.constant(&Tensor::full(&[4, 4], 1.0)).expect("leaf");
        let d = g.dropout(ones, 0.3, &mut rng_from(seed + 3)).expect("dropout");
        g.value(d).data().iter().map(|&v| f64::from(v)).collect()
    };
    case(
        "dropout",
        vec![u(&[4, 4], -1.0, 1.0)],
        Box::new(move |g, v| g.dropout(v[0], 0.3, &mut rng_from(seed + 3))),
        Box::new(move |x| x[0].iter().zip(&mask).map(|(a, m)| a * m).collect()),
    );
    let valid = [true, true, true, false];
    case(
        "attention",
        vec![u(&[4, 4], -1.0, 1.0), u(&[4, 4], -1.0, 1.0), u(&[4, 4], -1.0, 1.0)],
        Box::new(move |g, v| g.attention(v[0], v[1], v[2], &valid, 2, 2)),
        Box::new(move |x| ref_attention(&x[0], &x[1], &x[2], &valid, 2, 2, 4)),
    );
    case(
        "cross_entropy",
        vec![u(&[3, 4], -2.0, 2.0)],
        Box::new(|g, v| Ok(g.cross_entropy(v[0], &[2, -100, 0], -100)?.loss)),
        Box::new(|x| vec![ref_cross_entropy(&x[0], 4, &[2, -100, 0], -100, None)]),
    );
    case(
        "cross_entropy_denominator",
        vec![u(&[3, 4], -2.0, 2.0)],
        Box::new(|g, v| Ok(g.cross_entropy_with_denominator(v[0], &[1, 3, -100], -100, Some(5.0))?.loss)),
        Box::new(|x| vec![ref_cross_entropy(&x[0], 4, &[1, 3, -100], -100, Some(5.0))]),
    );
    cases
}

use selfal::model::{Batch, ModelConfig, TransformerMLM};

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        max_seq_len: 6,
        hidden_size: 8,
        num_heads: 2,
        num_layers: 2,
        ffn_inner_size: 16,
        vocab_size: 20,
        dropout_prob: 0.0,
        tie_embeddings: true,
    }
}

/// A tiny model with weights spread wide enough that every parameter gets
/// a well-conditioned gradient, a padded batch and its masked targets.
pub fn tiny_problem(seed: u64, tied: bool) -> (TransformerMLM, Batch, Vec<usize>, Vec<i64>) {
    let cfg = ModelConfig { tie_embeddings: tied, ..tiny_config() };
    let mut model = TransformerMLM::new(cfg, seed).expect("valid tiny config");
    let mut rng = rng_from(seed ^ 0xfeed);
    let names: Vec<String> = model.names().to_vec();
    for name in names {
        let p = model.param_mut(&name).expect("listed parameter");
        let gamma = name.ends_with("gamma");
        for v in p.data_mut() {
            *v = if gamma { rng.random_range(0.5..1.5) } else { rng.random_range(-0.5..0.5) };
        }
    }
    let batch = Batch::from_sequences(&[vec![3, 7, 2, 9, 11, 2], vec![3, 2, 14, 6]]).expect("batch");
    let rows = vec![2, 5, 7, 3];
    let targets = vec![12, 8, 5, 19];
    (model, batch, rows, targets)
}

/// Independent f64 forward pass of the encoder and head, reading weights by
/// name. Returns logits for `rows` of `batch`.
pub fn reference_logits(cfg: &ModelConfig, w: &dyn Fn(&str) -> Vec<f64>, batch: &Batch, rows: &[usize]) -> Vec<f64> {
    let (h, v, f, heads) = (cfg.hidden_size, cfg.vocab_size, cfg.ffn_inner_size, cfg.num_heads);
    let (bsz, seq) = (batch.batch, batch.seq);
    let n = bsz * seq;
    let linear = |x: &[f64], rows_n: usize, din: usize, dout: usize, wn: &str, bn: &str| -> Vec<f64> {
        let (wm, bv) = (w(wn), w(bn));
        let mut out = vec![0.0; rows_n * dout];
        for r in 0..rows_n {
            for o in 0..dout {
                let mut s = bv[o];
                for i in 0..din {
                    s += x[r * din + i] * wm[i * dout + o];
                }
                out[r * dout + o] = s;
            }
        }
        out
    };
    let norm = |x: &[f64], d: usize, gn: &str, bn: &str| -> Vec<f64> {
        let (g, b) = (w(gn), w(bn));
        let mut out = x.to_vec();
        for row in out.chunks_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + 1e-5).sqrt();
            for (i, x) in row.iter_mut().enumerate() {
                *x = (*x - mean) * rs * g[i] + b[i];
            }
        }
        out
    };
    let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());

    let (tok, pos) = (w("embeddings.token"), w("embeddings.position"));
    let mut x = vec![0.0; n * h];
    for r in 0..n {
        let (id, t) = (batch.ids[r] as usize, r % seq);
        for j in 0..h {
            x[r * h + j] = tok[id * h + j] + pos[t * h + j];
        }
    }
    x = norm(&x, h, "embeddings.norm.gamma", "embeddings.norm.beta");
    let d = h / heads;
    for l in 0..cfg.num_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        let q = linear(&x, n, h, h, &p("attn.query.weight"), &p("attn.query.bias"));
        let k = linear(&x, n, h, h, &p("attn.key.weight"), &p("attn.key.bias"));
        let vv = linear(&x, n, h, h, &p("attn.value.weight"), &p("attn.value.bias"));
        let mut a = vec![0.0; n * h];
        for b in 0..bsz {
            for hd in 0..heads {
                for i in 0..seq {
                    let qi = (b * seq + i) * h + hd * d;
                    let scores: Vec<f64> = (0..seq)
                        .map(|j| {
                            if batch.pad_mask[b * seq + j] {
                                f64::NEG_INFINITY
                            } else {
                                let kj = (b * seq + j) * h + hd * d;
                                (0..d).map(|c| q[qi + c] * k[kj + c]).sum::<f64>() / (d as f64).sqrt()
                            }
                        })
                        .collect();
                    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for j in 0..seq {
                        let vj = (b * seq + j) * h + hd * d;
                        for c in 0..d {
                            a[qi + c] += e[j] / z * vv[vj + c];
                        }
                    }
                }
            }
        }
        let o = linear(&a, n, h, h, &p("attn.output.weight"), &p("attn.output.bias"));
        let r: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
        x = norm(&r, h, &p("attn.norm.gamma"), &p("attn.norm.beta"));
        let mid: Vec<f64> = linear(&x, n, h, f, &p("ffn.in.weight"), &p("ffn.in.bias")).into_iter().map(gelu).collect();
        let o = linear(&mid, n, f, h, &p("ffn.out.weight"), &p("ffn.out.bias"));
        let r: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
        x = norm(&r, h, &p("ffn.norm.gamma"), &p("ffn.norm.beta"));
    }
    let picked: Vec<f64> = rows.iter().flat_map(|&r| x[r * h..(r + 1) * h].to_vec()).collect();
    let m = rows.len();
    let y: Vec<f64> = linear(&picked, m, h, h, "head.dense.weight", "head.dense.bias").into_iter().map(gelu).collect();
    let y = norm(&y, h, "head.norm.gamma", "head.norm.beta");
    let table = if cfg.tie_embeddings { tok } else { w("head.decoder.weight") };
    let bias = w("head.decoder.bias");
    let mut logits = vec![0.0; m * v];
    for r in 0..m {
        for t in 0..v {
            logits[r * v + t] = bias[t] + (0..h).map(|j| y[r * h + j] * table[t * h + j]).sum::<f64>();
        }
    }
    logits
}

/// Mean cross-entropy of `targets` under row-major `logits`.
pub fn reference_ce(logits: &[f64], v: usize, targets: &[i64]) -> f64 {
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = &logits[i * v..(i + 1) * v];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            lse - row[t as usize]
        })
        .sum();
    total / targets.len() as f64
}

/// Per-tensor gradient agreement on the full tiny-model loss.
pub struct ModelGradCheck {
    /// `(name, relative error, analytic norm, numeric norm)`.
    pub tensors: Vec<(String, f64, f64, f64)>,
    /// Largest absolute logit difference between the model and the f64
    /// reference.
    pub forward_gap: f64,
}

/// Analytic gradients from the tape against central differences of the
/// independent f64 reference forward pass.
pub fn check_model_gradients(seed: u64, tied: bool) -> ModelGradCheck {
    check_model_gradients_with_step(seed, tied, FD_STEP)
}

pub fn check_model_gradients_with_step(seed: u64, tied: bool, step: f64) -> ModelGradCheck {
    let (model, batch, rows, targets) = tiny_problem(seed, tied);
    let cfg = model.config().clone();
    let mut g = Graph::new();
    let p = model.bind(&mut g, true).expect("bind");
    let hid = model.encode(&mut g, &p, &batch, None).expect("encode");
    let picked = g.gather_rows(hid, &rows).expect("gather");
    let logits = model.head(&mut g, &p, picked).expect("head");
    let ce = g.cross_entropy(logits, &targets, -100).expect("loss");
    g.backward(ce.loss).expect("backward");

    let names: Vec<String> = model.names().to_vec();
    let mut weights: Vec<Vec<f64>> =
        model.params().iter().map(|t| t.data().iter().map(|&x| f64::from(x)).collect()).collect();
    let lookup = |ws: &Vec<Vec<f64>>| {
        let ws = ws.clone();
        let names = names.clone();
        move |name: &str| ws[names.iter().position(|n| n == name).expect("known parameter")].clone()
    };
    let reference = reference_logits(&cfg, &lookup(&weights), &batch, &rows);
    let forward_gap = g
        .value(logits)
        .data()
        .iter()
        .zip(&reference)
        .map(|(&a, b)| (f64::from(a) - b).abs())
        .fold(0.0, f64::max);

    let mut tensors = Vec::with_capacity(names.len());
    for i in 0..names.len() {
        let analytic: Vec<f64> = g.grad(p.vars()[i]).expect("gradient").iter().map(|&x| f64::from(x)).collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..weights[i].len() {
            let orig = weights[i][j];
            weights[i][j] = orig + step;
            let up = reference_ce(&reference_logits(&cfg, &lookup(&weights), &batch, &rows), cfg.vocab_size, &targets);
            weights[i][j] = orig - step;
            let down = reference_ce(&reference_logits(&cfg, &lookup(&weights), &batch, &rows), cfg.vocab_size, &targets);
            weights[i][j] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
        let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        tensors.push((names[i].clone(), rel_error(&analytic, &numeric), norm(&analytic), norm(&numeric)));
    }
    ModelGradCheck { tensors, forward_gap }
}

/// A toy corpus and a tokenizer trained on it.
pub fn toy_setup(languages: usize, sentences: usize, seed: u64, vocab: usize) -> (selfal::MultiCorpus, selfal::Tokenizer) {
    let corpus = selfal::toy::toy_corpus(languages, sentences, seed).expect("toy corpus");
    let tokenizer = selfal::Tokenizer::train(corpus.original_texts(), vocab).expect("tokenizer");
    (corpus, tokenizer)
}

/// A small model sized for `tokenizer`.
pub fn small_model(tokenizer: &selfal::Tokenizer, dropout: f32, seed: u64) -> selfal::TransformerMLM {
    let cfg = selfal::ModelConfig {
        max_seq_len: 48,
        hidden_size: 16,
        num_heads: 2,
        num_layers: 1,
        ffn_inner_size: 32,
        vocab_size: tokenizer.vocab_size(),
        dropout_prob: dropout,
        tie_embeddings: true,
    };
    selfal::TransformerMLM::new(cfg, seed).expect("model")
}
