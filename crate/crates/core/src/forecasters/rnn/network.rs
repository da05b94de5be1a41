//! Recurrent network forward pass and hand-written backpropagation through
//! time over a flat parameter vector.
//!
//! Cell equations follow the usual gate conventions (gate order r, z, n for
//! GRU and i, f, g, o for LSTM, with separate input and hidden biases).

use rand::Rng as _;

use super::{CellKind, RnnConfig, SequenceSample};
use crate::forecasters::pinball::{pinball, pinball_grad};
use crate::forecasters::ParameterLayout;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub kind: CellKind,
    pub dirs: usize,
    pub d_in: usize,
    pub h: usize,
    pub g: usize,
    pub t: usize,
    pub e_loc: usize,
    pub e_mod: usize,
    pub n_loc: usize,
    pub n_mod: usize,
    pub dense: usize,
    pub concat: usize,
    dir_len: usize,
    loc_off: usize,
    mod_off: usize,
    dw_off: usize,
    db_off: usize,
    ow_off: usize,
    ob_off: usize,
    pub total: usize,
}

/// Per-direction activations kept for the backward pass.
struct DirCache {
    /// Hidden states h_0..h_T.
    hs: Vec<f64>,
    /// Cell states c_0..c_T (LSTM only).
    cs: Vec<f64>,
    /// Activated gates per step.
    gates: Vec<f64>,
    /// GRU only: W_hn h + b_hn per step.
    hn: Vec<f64>,
}

pub(crate) struct Forward {
    dirs: Vec<DirCache>,
    d: Vec<f64>,
    a: Vec<f64>,
    pub y: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// out += W x, with W stored row-major as rows x cols.
fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// dW += d ⊗ x.
fn outer_add(dw: &mut [f64], cols: usize, d: &[f64], x: &[f64]) {
    for (r, dr) in d.iter().enumerate() {
        if *dr == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (w, xv) in row.iter_mut().zip(x) {
            *w += dr * xv;
        }
    }
}

/// out += Wᵀ d.
fn matvec_t_add(w: &[f64], cols: usize, d: &[f64], out: &mut [f64]) {
    for (r, dr) in d.iter().enumerate() {
        if *dr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += dr * wv;
        }
    }
}

impl Net {
    pub fn new(cfg: &RnnConfig, d_in: usize, n_loc: usize, n_mod: usize) -> Self {
        let dirs = if cfg.bidirectional { 2 } else { 1 };
        let g = cfg.cell.gates();
        let h = cfg.hidden;
        let dir_len = g * h * d_in + g * h * h + 2 * g * h;
        let concat = dirs * h + cfg.location_embedding + cfg.model_embedding + 1;
        let loc_off = dirs * dir_len;
        let mod_off = loc_off + n_loc * cfg.location_embedding;
        let dw_off = mod_off + n_mod * cfg.model_embedding;
        let db_off = dw_off + cfg.dense * concat;
        let ow_off = db_off + cfg.dense;
        let ob_off = ow_off + cfg.dense;
        Self {
            kind: cfg.cell,
            dirs,
            d_in,
            h,
            g,
            t: cfg.sequence_length,
            e_loc: cfg.location_embedding,
            e_mod: cfg.model_embedding,
            n_loc,
            n_mod,
            dense: cfg.dense,
            concat,
            dir_len,
            loc_off,
            mod_off,
            dw_off,
            db_off,
            ow_off,
            ob_off,
            total: ob_off + 1,
        }
    }

    pub fn recurrent_len(&self) -> usize {
        self.dirs * self.dir_len
    }

    pub fn layout(&self) -> ParameterLayout {
        let (g, h, d) = (self.g, self.h, self.d_in);
        let mut l = ParameterLayout::default();
        for dir in ["fwd", "bwd"].iter().take(self.dirs) {
            l.push(format!("{dir}.w_ih"), g * h * d);
            l.push(format!("{dir}.w_hh"), g * h * h);
            l.push(format!("{dir}.b_ih"), g * h);
            l.push(format!("{dir}.b_hh"), g * h);
        }
        l.push("location_embedding", self.n_loc * self.e_loc);
        l.push("model_embedding", self.n_mod * self.e_mod);
        l.push("dense.w", self.dense * self.concat);
        l.push("dense.b", self.dense);
        l.push("out.w", self.dense);
        l.push("out.b", 1);
        l
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.total);
        let mut fill = |p: &mut Vec<f64>, n: usize, fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            p.extend((0..n).map(|_| rng.random_range(-b..=b)));
        };
        let (g, h, d) = (self.g, self.h, self.d_in);
        for _ in 0..self.dirs {
            fill(&mut p, g * h * d, d);
            fill(&mut p, g * h * h, h);
            fill(&mut p, 2 * g * h, h);
        }
        fill(&mut p, self.n_loc * self.e_loc, 1);
        fill(&mut p, self.n_mod * self.e_mod, 1);
        fill(&mut p, self.dense * self.concat + self.dense, self.concat);
        fill(&mut p, self.dense + 1, self.dense);
        debug_assert_eq!(p.len(), self.total);
        p
    }

    /// Multiply-adds for one forward plus backward pass of one sample.
    pub fn ops_per_sample(&self) -> u64 {
        let gh = self.g * self.h;
        let step = gh * (self.d_in + self.h) + 8 * gh;
        let head = self.dense * self.concat + 2 * self.dense;
        (3 * (self.dirs * self.t * step + head)) as u64
    }

    fn dir_slices<'a>(&self, p: &'a [f64], dir: usize) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (g, h, d) = (self.g, self.h, self.d_in);
        let base = dir * self.dir_len;
        let w_ih = &p[base..base + g * h * d];
        let o = base + g * h * d;
        let w_hh = &p[o..o + g * h * h];
        let o = o + g * h * h;
        (w_ih, w_hh, &p[o..o + g * h], &p[o + g * h..o + 2 * g * h])
    }

    fn input_at<'a>(&self, s: &'a SequenceSample, dir: usize, step: usize) -> &'a [f64] {
        let t = if dir == 0 { step } else { self.t - 1 - step };
        &s.inputs[t * self.d_in..(t + 1) * self.d_in]
    }

    fn run_dir(&self, p: &[f64], s: &SequenceSample, dir: usize) -> DirCache {
        let (g, h, t) = (self.g, self.h, self.t);
        let (w_ih, w_hh, b_ih, b_hh) = self.dir_slices(p, dir);
        let lstm = self.kind == CellKind::Lstm;
        let mut c = DirCache {
            hs: vec![0.0; (t + 1) * h],
            cs: if lstm { vec![0.0; (t + 1) * h] } else { Vec::new() },
            gates: vec![0.0; t * g * h],
            hn: if lstm { Vec::new() } else { vec![0.0; t * h] },
        };
        let mut gi = vec![0.0; g * h];
        let mut gh = vec![0.0; g * h];
        for step in 0..t {
            let x = self.input_at(s, dir, step);
            gi.copy_from_slice(b_ih);
            matvec_add(w_ih, self.d_in, x, &mut gi);
            gh.copy_from_slice(b_hh);
            let (prev, rest) = c.hs.split_at_mut((step + 1) * h);
            let h_prev = &prev[step * h..];
            matvec_add(w_hh, h, h_prev, &mut gh);
            let h_next = &mut rest[..h];
            let gates = &mut c.gates[step * g * h..(step + 1) * g * h];
            if lstm {
                let (cp, cn) = c.cs.split_at_mut((step + 1) * h);
                let c_prev = &cp[step * h..];
                for j in 0..h {
                    let i = sigmoid(gi[j] + gh[j]);
                    let f = sigmoid(gi[h + j] + gh[h + j]);
                    let gg = (gi[2 * h + j] + gh[2 * h + j]).tanh();
                    let o = sigmoid(gi[3 * h + j] + gh[3 * h + j]);
                    let cv = f * c_prev[j] + i * gg;
                    cn[j] = cv;
                    h_next[j] = o * cv.tanh();
                    gates[j] = i;
                    gates[h + j] = f;
                    gates[2 * h + j] = gg;
                    gates[3 * h + j] = o;
                }
            } else {
                for j in 0..h {
                    let r = sigmoid(gi[j] + gh[j]);
                    let z = sigmoid(gi[h + j] + gh[h + j]);
                    let hn = gh[2 * h + j];
                    let n = (gi[2 * h + j] + r * hn).tanh();
                    h_next[j] = (1.0 - z) * n + z * h_prev[j];
                    gates[j] = r;
                    gates[h + j] = z;
                    gates[2 * h + j] = n;
                    c.hn[step * h + j] = hn;
                }
            }
        }
        c
    }

    pub fn forward(&self, p: &[f64], s: &SequenceSample, mask: Option<&[f64]>) -> Forward {
        let h = self.h;
        let dirs: Vec<DirCache> = (0..self.dirs).map(|d| self.run_dir(p, s, d)).collect();
        let mut z = Vec::with_capacity(self.concat);
        for c in &dirs {
            z.extend_from_slice(&c.hs[self.t * h..]);
        }
        let li = if s.location < self.n_loc { s.location } else { 0 };
        let mi = if s.model < self.n_mod { s.model } else { 0 };
        z.extend_from_slice(&p[self.loc_off + li * self.e_loc..self.loc_off + (li + 1) * self.e_loc]);
        z.extend_from_slice(&p[self.mod_off + mi * self.e_mod..self.mod_off + (mi + 1) * self.e_mod]);
        z.push(s.nominal);
        let d: Vec<f64> = match mask {
            Some(m) => z.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => z,
        };
        let mut a = p[self.db_off..self.db_off + self.dense].to_vec();
        matvec_add(&p[self.dw_off..self.db_off], self.concat, &d, &mut a);
        let ow = &p[self.ow_off..self.ob_off];
        let y = p[self.ob_off] + a.iter().zip(ow).map(|(av, w)| av.max(0.0) * w).sum::<f64>();
        Forward { dirs, d, a, y }
    }

    pub fn predict(&self, p: &[f64], s: &SequenceSample) -> f64 {
        self.forward(p, s, None).y
    }

    /// Accumulate dL/dparams into `grad` given dL/dy.
    pub fn backward(&self, p: &[f64], s: &SequenceSample, f: &Forward, mask: Option<&[f64]>, dy: f64, grad: &mut [f64]) {
        let (h, dense) = (self.h, self.dense);
        grad[self.ob_off] += dy;
        let ow = &p[self.ow_off..self.ob_off];
        let mut da = vec![0.0; dense];
        for j in 0..dense {
            let r = f.a[j].max(0.0);
            grad[self.ow_off + j] += dy * r;
            if f.a[j] > 0.0 {
                da[j] = dy * ow[j];
            }
        }
        outer_add(&mut grad[self.dw_off..self.db_off], self.concat, &da, &f.d);
        for j in 0..dense {
            grad[self.db_off + j] += da[j];
        }
        let mut dz = vec![0.0; self.concat];
        matvec_t_add(&p[self.dw_off..self.db_off], self.concat, &da, &mut dz);
        if let Some(m) = mask {
            dz.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        let off = self.dirs * h;
        let li = if s.location < self.n_loc { s.location } else { 0 };
        let mi = if s.model < self.n_mod { s.model } else { 0 };
        for j in 0..self.e_loc {
            grad[self.loc_off + li * self.e_loc + j] += dz[off + j];
        }
        for j in 0..self.e_mod {
            grad[self.mod_off + mi * self.e_mod + j] += dz[off + self.e_loc + j];
        }
        for dir in 0..self.dirs {
            self.backward_dir(p, s, &f.dirs[dir], dir, &dz[dir * h..(dir + 1) * h], grad);
        }
    }

    fn backward_dir(&self, p: &[f64], s: &SequenceSample, c: &DirCache, dir: usize, dh_t: &[f64], grad: &mut [f64]) {
        let (g, h, d) = (self.g, self.h, self.d_in);
        let (_, w_hh, _, _) = self.dir_slices(p, dir);
        let base = dir * self.dir_len;
        let (gw_ih, rest) = grad[base..base + self.dir_len].split_at_mut(g * h * d);
        let (gw_hh, rest) = rest.split_at_mut(g * h * h);
        let (gb_ih, gb_hh) = rest.split_at_mut(g * h);
        let lstm = self.kind == CellKind::Lstm;

        let mut dh = dh_t.to_vec();
        let mut dc = vec![0.0; h];
        let mut dgi = vec![0.0; g * h];
        let mut dgh = vec![0.0; g * h];
        for step in (0..self.t).rev() {
            let x = self.input_at(s, dir, step);
            let h_prev = &c.hs[step * h..(step + 1) * h];
            let gates = &c.gates[step * g * h..(step + 1) * g * h];
            if lstm {
                let c_prev = &c.cs[step * h..(step + 1) * h];
                let c_cur = &c.cs[(step + 1) * h..(step + 2) * h];
                for j in 0..h {
                    let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let tc = c_cur[j].tanh();
                    let d_o = dh[j] * tc;
                    let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
                    let di = dct * gg;
                    let dg = dct * i;
                    let df = dct * c_prev[j];
                    dc[j] = dct * f;
                    dgi[j] = di * i * (1.0 - i);
                    dgi[h + j] = df * f * (1.0 - f);
                    dgi[2 * h + j] = dg * (1.0 - gg * gg);
                    dgi[3 * h + j] = d_o * o * (1.0 - o);
                }
                dgh.copy_from_slice(&dgi);
            } else {
                for j in 0..h {
                    let (r, z, n) = (gates[j], gates[h + j], gates[2 * h + j]);
                    let hn = c.hn[step * h + j];
                    let dn = dh[j] * (1.0 - z);
                    let dzg = dh[j] * (h_prev[j] - n);
                    let dan = dn * (1.0 - n * n);
                    let dr = dan * hn;
                    let dar = dr * r * (1.0 - r);
                    let daz = dzg * z * (1.0 - z);
                    dgi[j] = dar;
                    dgi[h + j] = daz;
                    dgi[2 * h + j] = dan;
                    dgh[j] = dar;
                    dgh[h + j] = daz;
                    dgh[2 * h + j] = dan * r;
                }
            }
            outer_add(gw_ih, d, &dgi, x);
            outer_add(gw_hh, h, &dgh, h_prev);
            gb_ih.iter_mut().zip(&dgi).for_each(|(a, b)| *a += b);
            gb_hh.iter_mut().zip(&dgh).for_each(|(a, b)| *a += b);
            let mut dh_prev: Vec<f64> = if lstm {
                vec![0.0; h]
            } else {
                (0..h).map(|j| dh[j] * gates[h + j]).collect()
            };
            matvec_t_add(w_hh, h, &dgh, &mut dh_prev);
            dh = dh_prev;
        }
    }

    /// Mean pinball loss over `batch`; adds the gradient into `grad`.
    pub fn batch_loss_grad(
        &self,
        p: &[f64],
        batch: &[&SequenceSample],
        masks: Option<&[Vec<f64>]>,
        alpha: f64,
        grad: &mut [f64],
    ) -> f64 {
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (i, s) in batch.iter().enumerate() {
            let m = masks.map(|m| m[i].as_slice());
            let f = self.forward(p, s, m);
            loss += pinball(s.target, f.y, alpha);
            let dy = pinball_grad(s.target, f.y, alpha) / n;
            self.backward(p, s, &f, m, dy, grad);
        }
        loss / n
    }
}
