//! Shared helpers for integration tests: a random generator of structured
//! instances and independent oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachctl_core::analysis::{reach_control_indices, ProblemInstance};
use reachctl_core::polylin::lp::{Cmp, LinearProgram, LpOutcome};
use reachctl_core::polylin::{null_basis, rank};
use reachctl_core::{AffineSystem, Simplex};

pub fn rng(seed: u64) -> ChaCha8Rng {
    let seed = std::env::var("REACHCTL_SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .map_or(seed, |s| s ^ seed);
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Simplex {
    loop {
        let verts: Vec<DVector<f64>> = (0..=n).map(|_| random_vec(rng, n) * 2.0).collect();
        if let Ok(s) = Simplex::new(verts) {
            // Keep well-shaped simplices only.
            let fact: f64 = (1..=n).map(|k| k as f64).product();
            let ideal = s.diameter().powi(n as i32) / fact;
            if s.volume() > 0.05 * ideal {
                return s;
            }
        }
    }
}

/// A vector in `C(v_i)` built from its generators.
fn vertex_cone_vector(rng: &mut ChaCha8Rng, s: &Simplex, i: usize) -> DVector<f64> {
    let n = s.dim();
    let vi = s.vertex(i);
    let mut b = (s.vertex(0) - vi) * rng.gen_range(-1.0..0.5);
    for k in (1..=n).filter(|&k| k != i) {
        b += (s.vertex(k) - vi) * rng.gen_range(0.0..1.0);
    }
    b
}

/// Random instance whose equilibrium set meets `S` in a chosen face of `F0`.
///
/// `O` is built between `aff(G)` and a supporting hyperplane of `S` at `G`,
/// so `S ∩ O = G` holds by construction.
pub fn structured_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> ProblemInstance {
    loop {
        let n = rng.gen_range(2..=max_n);
        let m = rng.gen_range(1..=max_m.min(n - 1));
        let s = random_simplex(rng, n);
        let mut g: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(0.6)).collect();
        if g.is_empty() {
            g.push(rng.gen_range(1..=n));
        }
        // Single-vertex faces always violate A3; keep a few of them.
        if g.len() == 1 && rng.gen_bool(0.8) {
            continue;
        }
        let kappa = g.len() - 1;
        let lo = kappa.max(m);
        if lo > n - 1 {
            continue;
        }
        let o_dim = rng.gen_range(lo..=n - 1);

        // Supporting normal c = Σ_{j ∉ G} α_j h_j.
        let mut c = DVector::zeros(n);
        for j in (0..=n).filter(|j| !g.contains(j)) {
            c += s.normal(j) * rng.gen_range(0.2..1.0);
        }
        let base = s.vertex(g[0]).clone();
        let mut dirs: Vec<DVector<f64>> = g[1..].iter().map(|&k| s.vertex(k) - &base).collect();
        while dirs.len() < o_dim {
            let r = random_vec(rng, n);
            let r = &r - &c * (c.dot(&r) / c.norm_squared());
            dirs.push(r);
        }
        let span = if dirs.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&dirs)
        };
        if rank(&span, 1e-6) != o_dim {
            continue;
        }
        // W: rows spanning O^⊥.
        let w = if o_dim == 0 {
            DMatrix::identity(n, n)
        } else {
            null_basis(&span.transpose()).matrix().transpose()
        };
        let d = &w * &base;

        let cols: Vec<DVector<f64>> = (0..m)
            .map(|k| {
                if k < g.len() && rng.gen_bool(0.8) {
                    vertex_cone_vector(rng, &s, g[k])
                } else {
                    random_vec(rng, n)
                }
            })
            .collect();
        let b = DMatrix::from_columns(&cols);
        if rank(&b, 1e-6) != m {
            continue;
        }
        let nl = null_basis(&b.transpose()).matrix().clone();
        if nl.ncols() != n - m {
            continue;
        }
        let mmat = DMatrix::from_fn(n - m, n - o_dim, |_, _| rng.gen_range(-1.0..1.0));
        if rank(&mmat, 1e-6) != n - o_dim {
            continue;
        }
        let p = &nl * (nl.transpose() * &nl).try_inverse().expect("orthonormal basis");
        let k0 = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let k1 = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let a = &p * &mmat * &w + &b * k0;
        let offset = -(&p * &mmat * &d) + &b * k1;
        let Ok(sys) = AffineSystem::new(a, b, offset) else {
            continue;
        };
        if let Ok(inst) = ProblemInstance::new(sys, s) {
            return inst;
        }
    }
}

/// Spans of `B ∩ C(v_i)` for each vertex of `G`, found through implicit
/// equalities of the coefficient-space cone.
pub fn cone_span(inst: &ProblemInstance, i: usize) -> DMatrix<f64> {
    let b = inst.system.b();
    let m = b.ncols();
    let rows: Vec<DVector<f64>> = inst
        .vertex_cone_normals(i)
        .iter()
        .map(|h| b.tr_mul(h))
        .collect();
    let mut implicit: Vec<DVector<f64>> = Vec::new();
    for r in &rows {
        if r.norm() < 1e-12 {
            continue;
        }
        let mut lp = LinearProgram::maximize();
        let w: Vec<usize> = (0..m).map(|_| lp.var(0.0, -1.0, 1.0)).collect();
        for g in &rows {
            lp.dense(&w, g.as_slice(), Cmp::Le, 0.0);
        }
        let neg: Vec<f64> = r.iter().map(|v| -v / r.norm()).collect();
        let t = lp.var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let mut terms: Vec<(usize, f64)> = w.iter().copied().zip(neg).collect();
        terms.push((t, -1.0));
        lp.constraint(terms, Cmp::Ge, 0.0);
        let best = match lp.solve().expect("finite LP") {
            LpOutcome::Optimal { objective, .. } => objective,
            _ => 0.0,
        };
        if best < 1e-9 {
            implicit.push(r.clone());
        }
    }
    let coeff_span = if implicit.is_empty() {
        DMatrix::identity(m, m)
    } else {
        null_basis(&DMatrix::from_columns(&implicit).transpose()).matrix().clone()
    };
    b * coeff_span
}

/// Largest number of `G` vertices admitting linearly independent cone
/// vectors, by Rado's condition on every subfamily.
pub fn brute_force_m_hat(inst: &ProblemInstance) -> usize {
    let verts = inst.g_vertices().to_vec();
    let spans: Vec<DMatrix<f64>> = verts.iter().map(|&v| cone_span(inst, v)).collect();
    let k = verts.len();
    let rank_of = |mask: usize| {
        let cols: Vec<DVector<f64>> = (0..k)
            .filter(|i| mask & (1 << i) != 0)
            .flat_map(|i| spans[i].column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        if cols.is_empty() {
            0
        } else {
            rank(&DMatrix::from_columns(&cols), 1e-8)
        }
    };
    let mut best = 0;
    for set in 1..(1usize << k) {
        let size = set.count_ones() as usize;
        if size <= best {
            continue;
        }
        let ok = (1..=set)
            .filter(|sub| sub & set == *sub)
            .all(|sub| rank_of(sub) >= sub.count_ones() as usize);
        if ok {
            best = size;
        }
    }
    best
}

#[derive(Debug, Default)]
pub struct IndexStats {
    pub instances: usize,
    pub with_g: usize,
    pub constructed: usize,
    pub oracle_checked: usize,
}

/// Checks the index-construction properties on one instance; returns
/// `Err` with a message on the first violation.
pub fn check_index_properties(inst: &ProblemInstance, stats: &mut IndexStats) -> Result<(), String> {
    stats.instances += 1;
    if inst.selection.is_none() {
        return Ok(());
    }
    stats.with_g += 1;
    let kappa = inst.kappa.expect("selection implies G");
    let m_hat = inst.m_hat.expect("selection implies m̂");
    if kappa + 1 <= 4 {
        stats.oracle_checked += 1;
        let oracle = brute_force_m_hat(inst);
        if oracle != m_hat {
            return Err(format!("m̂ = {m_hat} but oracle gives {oracle}"));
        }
    }
    let Ok(idx) = reach_control_indices(inst) else {
        return Ok(());
    };
    stats.constructed += 1;
    let n = inst.n();
    for g in &idx.groups {
        if let Some(c) = g.coeffs.iter().find(|&&c| c >= -1e-9) {
            return Err(format!("coefficient {c} not below −1e−9"));
        }
        let verts = g.vertices();
        for (_, b) in &g.members {
            for j in (1..=n).filter(|j| !verts.contains(j)) {
                let v = inst.simplex.normal(j).dot(&b.normalize()).abs();
                if v > 1e-8 {
                    return Err(format!("orthogonality {v:e} at h{j}"));
                }
            }
        }
        let k = g.r() - 1;
        let mm = DMatrix::from_fn(k, k, |i, j| {
            inst.simplex.normal(g.members[i].0).dot(&g.members[j].1.normalize())
        });
        if !reachctl_core::polylin::is_nonsingular_m_matrix(&mm, 1e-10) {
            return Err(format!("group matrix {mm} is not a nonsingular M-matrix"));
        }
    }
    if 2 * m_hat < kappa + 1 {
        return Err(format!("m̂ = {m_hat} < (κ+1)/2 with κ = {kappa}"));
    }
    Ok(())
}
