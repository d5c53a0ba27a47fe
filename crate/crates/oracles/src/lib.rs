//! Independent reference computations for tests: every labeling of every
//! block is materialized densely, and the dual is solved by accelerated
//! projected gradient on the product of simplices. Nothing here uses the
//! solver code paths of `bcfw`.

use bcfw::models::{Labeling, StructuredModel};

/// One labeling of one block: dense `psi` and its loss.
#[derive(Clone, Debug)]
pub struct DenseCorner {
    pub labeling: Labeling,
    pub psi: Vec<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct DenseProblem {
    pub lambda: f64,
    pub dim: usize,
    pub blocks: Vec<Vec<DenseCorner>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Clone, Debug)]
pub struct DualSolution {
    pub alpha: Vec<Vec<f64>>,
    /// Minimized dual objective `lambda/2 |w|^2 - b^T alpha`.
    pub objective: f64,
    pub gap: f64,
    pub w: Vec<f64>,
    pub iterations: usize,
}

impl DenseProblem {
    /// Requires `model.enumerate` on every block.
    pub fn from_model<M: StructuredModel + ?Sized>(model: &M, lambda: f64) -> Self {
        let d = model.feature_dim();
        let blocks = (0..model.num_examples())
            .map(|i| {
                model
                    .enumerate(i)
                    .expect("model must enumerate its labels")
                    .into_iter()
                    .map(|y| DenseCorner {
                        psi: model.feature_diff(i, &y).unwrap().to_dense(d),
                        loss: model.loss(i, &y).unwrap(),
                        labeling: y,
                    })
                    .collect()
            })
            .collect();
        DenseProblem { lambda, dim: d, blocks }
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    /// Coefficients with all mass on the zero-loss, zero-psi labeling.
    pub fn ground_truth_alpha(&self) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                b.iter().map(|c| if c.loss == 0.0 && c.psi.iter().all(|&x| x == 0.0) { 1.0 } else { 0.0 }).collect()
            })
            .collect()
    }

    pub fn weights(&self, alpha: &[Vec<f64>]) -> Vec<f64> {
        let c = 1.0 / (self.lambda * self.n() as f64);
        let mut w = vec![0.0; self.dim];
        for (b, a) in self.blocks.iter().zip(alpha) {
            for (corner, &x) in b.iter().zip(a) {
                for (wj, pj) in w.iter_mut().zip(&corner.psi) {
                    *wj += c * x * pj;
                }
            }
        }
        w
    }

    pub fn loss_term(&self, alpha: &[Vec<f64>]) -> f64 {
        let nf = self.n() as f64;
        self.blocks.iter().zip(alpha).map(|(b, a)| b.iter().zip(a).map(|(c, &x)| x * c.loss / nf).sum::<f64>()).sum()
    }

    pub fn dual_objective(&self, alpha: &[Vec<f64>]) -> f64 {
        let w = self.weights(alpha);
        0.5 * self.lambda * dot(&w, &w) - self.loss_term(alpha)
    }

    /// `df/dalpha_i(y) = (psi_i(y)^T w - L_i(y)) / n`
    pub fn gradient(&self, alpha: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let w = self.weights(alpha);
        let nf = self.n() as f64;
        self.blocks.iter().map(|b| b.iter().map(|c| (dot(&c.psi, &w) - c.loss) / nf).collect()).collect()
    }

    /// Per-block Frank-Wolfe gaps `<grad_i, alpha_i> - min_y grad_i(y)`.
    pub fn block_gaps(&self, alpha: &[Vec<f64>]) -> Vec<f64> {
        self.gradient(alpha)
            .iter()
            .zip(alpha)
            .map(|(g, a)| dot(g, a) - g.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Per-block pairwise gaps `max_{y in S_i} grad_i(y) - min_y grad_i(y)`.
    pub fn pairwise_block_gaps(&self, alpha: &[Vec<f64>]) -> Vec<f64> {
        self.gradient(alpha)
            .iter()
            .zip(alpha)
            .map(|(g, a)| {
                let worst =
                    g.iter().zip(a).filter(|(_, &x)| x > 0.0).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
                worst - g.iter().cloned().fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Primal objective by enumeration.
    pub fn primal(&self, w: &[f64]) -> f64 {
        let nf = self.n() as f64;
        let hinge: f64 = self.blocks.iter().map(|b| self.brute_max(b, w).1).sum();
        0.5 * self.lambda * dot(w, w) + hinge / nf
    }

    /// Label and value of `max_y L(y) - psi(y)^T w` by enumeration; first
    /// labeling wins ties.
    pub fn brute_max<'a>(&self, block: &'a [DenseCorner], w: &[f64]) -> (&'a Labeling, f64) {
        let mut best = (&block[0].labeling, f64::NEG_INFINITY);
        for c in block {
            let v = c.loss - dot(&c.psi, w);
            if v > best.1 {
                best = (&c.labeling, v);
            }
        }
        best
    }

    /// Upper bound on the gradient's Lipschitz constant: `lambda |A|_F^2`.
    fn lipschitz(&self) -> f64 {
        let c = 1.0 / (self.lambda * self.n() as f64);
        let fro: f64 = self.blocks.iter().flatten().map(|k| dot(&k.psi, &k.psi) * c * c).sum();
        (self.lambda * fro).max(1e-300)
    }

    /// Accelerated projected gradient with gradient-based restarts, run
    /// until the Frank-Wolfe gap is at most `tol`.
    pub fn solve_dual(&self, tol: f64, max_iter: usize) -> DualSolution {
        let step = 1.0 / self.lipschitz();
        let mut x = self.ground_truth_alpha();
        if x.iter().any(|a| a.iter().sum::<f64>() != 1.0) {
            x = self.blocks.iter().map(|b| vec![1.0 / b.len() as f64; b.len()]).collect();
        }
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it;
            if it % 50 == 0 && self.block_gaps(&x).iter().sum::<f64>() <= tol {
                break;
            }
            let g = self.gradient(&y);
            let next: Vec<Vec<f64>> = y
                .iter()
                .zip(&g)
                .map(|(yi, gi)| project_simplex(&yi.iter().zip(gi).map(|(a, b)| a - step * b).collect::<Vec<_>>()))
                .collect();
            // restart when the momentum points uphill
            let uphill: f64 = g
                .iter()
                .zip(next.iter().zip(&x))
                .map(|(gi, (ni, xi))| gi.iter().zip(ni.iter().zip(xi)).map(|(gg, (a, b))| gg * (a - b)).sum::<f64>())
                .sum();
            let t_next = if uphill > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let mom = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
            y = next
                .iter()
                .zip(&x)
                .map(|(ni, xi)| ni.iter().zip(xi).map(|(a, b)| a + mom * (a - b)).collect())
                .collect();
            x = next;
            t = t_next;
        }
        let gap = self.block_gaps(&x).iter().sum();
        DualSolution { objective: self.dual_objective(&x), w: self.weights(&x), gap, alpha: x, iterations }
    }
}

/// Hinge values `max_y L_i(y) - psi_i(y)^T w` for every block, by
/// enumeration.
pub fn brute_hinges<M: StructuredModel + ?Sized>(model: &M, w: &[f64]) -> Vec<f64> {
    let d = model.feature_dim();
    (0..model.num_examples())
        .map(|i| {
            model
                .enumerate(i)
                .expect("model must enumerate its labels")
                .iter()
                .map(|y| model.loss(i, y).unwrap() - dot(&model.feature_diff(i, y).unwrap().to_dense(d), w))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}


/// Small fixed instances shared by the test suites.
pub mod fixtures {
    use bcfw::models::{MulticlassExample, MulticlassModel};

    /// Three 2-feature examples, four classes.
    pub fn three_examples() -> MulticlassModel {
        let ex = |x: [f64; 2], label| MulticlassExample { x: x.to_vec(), label };
        MulticlassModel::new(4, vec![ex([1.0, 0.5], 0), ex([-0.4, 1.2], 2), ex([0.3, -0.9], 3)]).unwrap()
    }

    /// Two 1-feature examples, two classes; `d = 2`.
    pub fn two_features() -> MulticlassModel {
        let ex = |x: f64, label| MulticlassExample { x: vec![x], label };
        MulticlassModel::new(2, vec![ex(1.0, 0), ex(-0.5, 1)]).unwrap()
    }
}
