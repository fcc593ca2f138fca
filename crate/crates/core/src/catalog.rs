//! Reference instances with known structure, plus vertex controls that
//! reproduce their published gains.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::analysis::{AffineSystem, ProblemInstance};
use crate::geometry::Simplex;
use crate::synthesis::Pins;

/// Double integrator `ẋ1 = x2, ẋ2 = u` on `co{(−1,1), (1,0), (0,0)}`.
pub fn double_integrator_parts() -> (AffineSystem, Simplex) {
    let sys = AffineSystem::new(
        dmatrix![0.0, 1.0; 0.0, 0.0],
        dmatrix![0.0; 1.0],
        dvector![0.0, 0.0],
    )
    .expect("valid system");
    let s = Simplex::new(vec![dvector![-1.0, 1.0], dvector![1.0, 0.0], dvector![0.0, 0.0]])
        .expect("valid simplex");
    (sys, s)
}

pub fn double_integrator() -> ProblemInstance {
    let (sys, s) = double_integrator_parts();
    ProblemInstance::new(sys, s).expect("valid instance")
}

/// Vertex controls of the single affine law `u = [−2 −3.75]x + 1`.
pub fn double_integrator_affine_controls() -> Vec<DVector<f64>> {
    vec![dvector![-0.75], dvector![-1.0], dvector![1.0]]
}

/// Pins reproducing the published two-piece law.
pub fn double_integrator_pins() -> Pins {
    let mut pins = Pins::default();
    pins.points.push(dvector![0.5, 0.25]);
    pins.pieces.insert(1, vec![dvector![-1.0], dvector![-1.0], dvector![-1.0]]);
    pins.pieces.insert(2, vec![dvector![-0.75], dvector![-1.0], dvector![1.0]]);
    pins
}

/// Two-input system on the unit simplex of `ℝ⁴` with `G = F0`.
pub fn two_input_4d_parts() -> (AffineSystem, Simplex) {
    let a: DMatrix<f64> = dmatrix![
        -3.0, -3.0, -3.0, 1.0;
        0.0, 0.0, 0.0, -2.0;
        -3.0, -3.0, -3.0, 1.0;
        0.0, 0.0, 0.0, -2.0
    ];
    let b: DMatrix<f64> = dmatrix![
        0.0, -2.0;
        0.0, 1.0;
        -2.0, 0.0;
        1.0, 0.0
    ];
    let sys = AffineSystem::new(a, b, dvector![1.0, 1.0, 1.0, 1.0]).expect("valid system");
    let mut verts = vec![DVector::zeros(4)];
    for i in 0..4 {
        let mut e = DVector::zeros(4);
        e[i] = 1.0;
        verts.push(e);
    }
    (sys, Simplex::new(verts).expect("valid simplex"))
}

pub fn two_input_4d() -> ProblemInstance {
    let (sys, s) = two_input_4d_parts();
    ProblemInstance::new(sys, s).expect("valid instance")
}

/// Pins reproducing the published three-piece law.
pub fn two_input_4d_pins() -> Pins {
    let mut pins = Pins::default();
    pins.points.push(dvector![0.0, 0.75, 0.0, 0.0]);
    pins.points.push(dvector![0.0, 0.0, 0.0, 0.8]);
    pins.pieces.insert(
        1,
        vec![
            dvector![-1.0, -2.0],
            dvector![-1.0, -2.0],
            dvector![-1.0, -2.0],
            dvector![-1.0, -2.0],
            dvector![1.0, 0.0],
        ],
    );
    pins.pieces.insert(
        2,
        vec![
            dvector![-4.0, 0.6],
            dvector![-5.0, -1.0],
            dvector![-1.0, -2.0],
            dvector![-5.0, -1.0],
            dvector![-3.0, 1.0],
        ],
    );
    pins.pieces.insert(
        3,
        vec![
            dvector![0.0, 0.0],
            dvector![-1.0, 0.0],
            dvector![-1.0, -2.0],
            dvector![0.0, -1.0],
            dvector![-4.0, 0.6],
        ],
    );
    pins
}
