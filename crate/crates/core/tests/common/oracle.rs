//! Straight-line reference arithmetic on nested `Vec`s, written without the
//! tape or `Tensor2D` so the library can be checked against it.

pub type M = Vec<Vec<f64>>;

pub fn of(t: &veritas_core::numcore::Tensor2D<f64>) -> M {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn matmul(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &M, b: &M) -> M {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn add_row(a: &M, row: &[f64]) -> M {
    a.iter()
        .map(|x| x.iter().zip(row).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn map(a: &M, f: impl Fn(f64) -> f64) -> M {
    a.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn layer_norm(a: &M, gain: &[f64], bias: &[f64], eps: f64) -> M {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(j, x)| (x - mean) / (var + eps).sqrt() * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

/// One GRU step for row vectors `x` and `h`.
#[allow(clippy::too_many_arguments)]
pub fn gru_cell(x: &[f64], h: &[f64], w: [&M; 3], u: [&M; 3], b: [&[f64]; 3]) -> Vec<f64> {
    let hid = h.len();
    let lin = |v: &[f64], m: &M, j: usize| (0..v.len()).map(|i| v[i] * m[i][j]).sum::<f64>();
    let z: Vec<f64> = (0..hid)
        .map(|j| sigmoid(lin(x, w[0], j) + lin(h, u[0], j) + b[0][j]))
        .collect();
    let r: Vec<f64> = (0..hid)
        .map(|j| sigmoid(lin(x, w[1], j) + lin(h, u[1], j) + b[1][j]))
        .collect();
    let rh: Vec<f64> = (0..hid).map(|j| r[j] * h[j]).collect();
    let cand: Vec<f64> = (0..hid)
        .map(|j| (lin(x, w[2], j) + lin(&rh, u[2], j) + b[2][j]).tanh())
        .collect();
    (0..hid).map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j]).collect()
}

/// Multi-head scaled dot-product attention with an additive key mask.
pub fn attention(x: &M, mask: &[bool], wq: &M, wk: &M, wv: &M, wo: &M, heads: usize) -> (M, Vec<M>) {
    let (q, k, v) = (matmul(x, wq), matmul(x, wk), matmul(x, wv));
    let d = x[0].len();
    let dk = d / heads;
    let len = x.len();
    let mut concat = vec![vec![0.0; d]; len];
    let mut all_weights = Vec::new();
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        let mut weights = vec![vec![0.0; len]; len];
        for i in 0..len {
            let logits: Vec<f64> = (0..len)
                .map(|j| {
                    let dot: f64 = cols.clone().map(|c| q[i][c] * k[j][c]).sum();
                    dot / (dk as f64).sqrt() + if mask[j] { 0.0 } else { -1e9 }
                })
                .collect();
            weights[i] = softmax(&logits);
            for c in cols.clone() {
                concat[i][c] = (0..len).map(|j| weights[i][j] * v[j][c]).sum();
            }
        }
        all_weights.push(weights);
    }
    (matmul(&concat, wo), all_weights)
}

fn naive_idf(corpus: &[Vec<String>], token: &str) -> f64 {
    let n = corpus.len() as f64;
    let df = corpus.iter().filter(|d| d.iter().any(|t| t == token)).count() as f64;
    ((1.0 + n) / (1.0 + df)).ln() + 1.0
}

/// TF-IDF of `doc` against `corpus`, recomputed densely: raw counts times
/// smoothed idf over the sorted tokens with document frequency at least
/// `min_df`, then L2 normalized. Zero-weight tokens are omitted.
pub fn tfidf(corpus: &[Vec<String>], doc: &[String], min_df: usize) -> Vec<(String, f64)> {
    let tokens: std::collections::BTreeSet<&String> = corpus.iter().flatten().collect();
    let kept: Vec<&String> = tokens
        .into_iter()
        .filter(|t| corpus.iter().filter(|d| d.contains(t)).count() >= min_df)
        .collect();
    let mut raw = Vec::new();
    for t in kept {
        let count = doc.iter().filter(|x| *x == t).count();
        if count > 0 {
            raw.push((t.clone(), count as f64 * naive_idf(corpus, t)));
        }
    }
    let mut sq = 0.0;
    for (_, w) in &raw {
        sq += w * w;
    }
    let norm = sq.sqrt();
    raw.into_iter().map(|(t, w)| (t, w / norm)).collect()
}
