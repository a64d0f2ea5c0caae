//! Forward substitution for `h_t^{x,τ} = x + e^{−τ}∫_{−T_h}^t e^s σ_i(h_s) dL^i_s` on a cell table,
//! with `D = ∂h/∂τ` and `P = ∂h/∂x` differentiated through the same discrete recursion.

use crate::flows::SystemSpec;
use crate::levy_paths::CellTable;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct State {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub p: Vec<f64>,
}

pub(crate) struct Recursion<'a> {
    sys: &'a SystemSpec,
    table: &'a CellTable,
    derivatives: bool,
    dim: usize,
    s: Vec<f64>,
    tmp: Vec<f64>,
    jac: Vec<f64>,
    m: Vec<f64>,
    c: Vec<f64>,
    buf: Vec<f64>,
}

impl<'a> Recursion<'a> {
    pub(crate) fn new(sys: &'a SystemSpec, table: &'a CellTable, derivatives: bool) -> Self {
        let d = sys.dim();
        Self {
            sys,
            table,
            derivatives,
            dim: d,
            s: vec![0.0; d],
            tmp: vec![0.0; d],
            jac: vec![0.0; d * d],
            m: vec![0.0; d * d],
            c: vec![0.0; table.dim()],
            buf: vec![0.0; d * d],
        }
    }

    pub(crate) fn initial(&self, x: &[f64]) -> State {
        let d = self.dim;
        let mut p = vec![0.0; d * d];
        for i in 0..d {
            p[i * d + i] = 1.0;
        }
        State { h: x.to_vec(), d: vec![0.0; d], p }
    }

    /// Adds `Σ_i σ_i(h_at) c^i`, where every weight carries the factor `e^{−τ}`.
    fn kick(&mut self, st: &mut State, h_at: Option<&[f64]>) {
        let d = self.dim;
        self.s.iter_mut().for_each(|v| *v = 0.0);
        if self.derivatives {
            self.m.iter_mut().for_each(|v| *v = 0.0);
        }
        let h: &[f64] = match h_at {
            Some(h) => h,
            None => &st.h,
        };
        for (k, field) in self.sys.noise.iter().enumerate() {
            let ck = self.c[k];
            if ck == 0.0 {
                continue;
            }
            field.eval(h, &mut self.tmp);
            for (s, t) in self.s.iter_mut().zip(&self.tmp) {
                *s += ck * t;
            }
            if self.derivatives {
                field.jacobian(h, &mut self.jac);
                for (m, j) in self.m.iter_mut().zip(&self.jac) {
                    *m += ck * j;
                }
            }
        }
        if self.derivatives {
            // D ← D − kick + M D ; P ← P + M P
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += self.m[i * d + j] * st.d[j];
                }
                self.tmp[i] = acc;
            }
            for i in 0..d {
                st.d[i] += self.tmp[i] - self.s[i];
            }
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += self.m[i * d + k] * st.p[k * d + j];
                    }
                    self.buf[i * d + j] = acc;
                }
            }
            for (p, b) in st.p.iter_mut().zip(&self.buf) {
                *p += b;
            }
        }
        for (h, s) in st.h.iter_mut().zip(&self.s) {
            *h += s;
        }
    }

    fn jump_weights(&mut self, size: &[f64], w: f64) {
        for (c, u) in self.c.iter_mut().zip(size) {
            *c = u * w;
        }
    }

    fn start_jumps(&mut self, i: usize, tau: f64, st: &mut State, h_at: Option<&[f64]>) {
        let table = self.table;
        for j in table.jumps(i).iter().filter(|j| j.at_start) {
            self.jump_weights(table.jump_size(j), (j.time - tau).exp());
            self.kick(st, h_at);
        }
    }

    fn end_jumps(&mut self, i: usize, tau: f64, st: &mut State, h_at: Option<&[f64]>) {
        let table = self.table;
        for j in table.jumps(i).iter().filter(|j| !j.at_start) {
            self.jump_weights(table.jump_size(j), (j.time - tau).exp());
            self.kick(st, h_at);
        }
    }

    fn continuous(&mut self, i: usize, tau: f64, e0: f64, st: &mut State, h_at: Option<&[f64]>) -> f64 {
        let table = self.table;
        let (t0, t1) = (table.t0(i), table.t1(i));
        let dt = t1 - t0;
        let e1 = (t1 - tau).exp();
        let wd = (e1 - e0) / dt;
        let wg = (0.5 * (t0 + t1) - tau).exp();
        let (drift, gauss) = (table.drift(i), table.gaussian(i));
        for k in 0..self.c.len() {
            self.c[k] = drift[k] * wd + gauss[k] * wg;
        }
        self.kick(st, h_at);
        e1
    }

    /// Runs from the first table node up to node `upto`, calling `on_node(k, left, right)` with
    /// the one-sided limits at every node (or only at `upto` when `all_nodes` is false).
    pub(crate) fn run(
        &mut self,
        x: &[f64],
        tau: f64,
        upto: usize,
        all_nodes: bool,
        mut on_node: impl FnMut(usize, &State, &State),
    ) {
        let mut st = self.initial(x);
        let mut left = st.clone();
        let mut e0 = (self.table.t0(0) - tau).exp();
        for i in 0..upto {
            self.start_jumps(i, tau, &mut st, None);
            if all_nodes {
                on_node(i, &left, &st);
            }
            e0 = self.continuous(i, tau, e0, &mut st, None);
            if all_nodes || i + 1 == upto {
                left.clone_from(&st);
            }
            self.end_jumps(i, tau, &mut st, None);
        }
        if upto < self.table.len() {
            self.start_jumps(upto, tau, &mut st, None);
        }
        on_node(upto, &left, &st);
    }

    /// Replays the recursion for `D` and `P` along stored one-sided limits of `h` at nodes
    /// `0..=n`; returns the left and right limits of the full state.
    pub(crate) fn replay(
        &mut self,
        x: &[f64],
        tau: f64,
        left: &[Vec<f64>],
        right: &[Vec<f64>],
    ) -> (Vec<State>, Vec<State>) {
        let n = left.len() - 1;
        let mut st = self.initial(x);
        let mut lefts = vec![st.clone()];
        let mut rights = Vec::with_capacity(n + 1);
        let mut e0 = (self.table.t0(0) - tau).exp();
        for i in 0..n {
            self.start_jumps(i, tau, &mut st, Some(left[i].as_slice()));
            st.h.clone_from(&right[i]);
            rights.push(st.clone());
            e0 = self.continuous(i, tau, e0, &mut st, Some(right[i].as_slice()));
            st.h.clone_from(&left[i + 1]);
            lefts.push(st.clone());
            self.end_jumps(i, tau, &mut st, Some(left[i + 1].as_slice()));
        }
        if n < self.table.len() {
            self.start_jumps(n, tau, &mut st, Some(left[n].as_slice()));
        }
        st.h.clone_from(&right[n]);
        rights.push(st);
        (lefts, rights)
    }
}
