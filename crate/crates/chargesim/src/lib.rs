//! Stochastic charge-state dynamics of an optically driven solid-state
//! emitter: a three-state jump process (bright ground, bright excited, dark)
//! driven by laser pulse sequences and a static bias voltage, with
//! time-tagged photon detection and curve-fitting analysis on top.

pub mod analysis;
pub mod engine;
pub mod model;
pub mod photonics;
pub mod sequence;

#[cfg(test)]
mod probe {
    #[test]
    fn nalgebra_exp_available() {
        let m = nalgebra::Matrix3::<f64>::new(-2.0, 1.0, 0.0, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0);
        let e = (m * 0.5).exp();
        // Generator columns sum to zero, so exp columns each sum to one.
        for c in 0..3 {
            assert!((e.column(c).sum() - 1.0).abs() < 1e-12);
        }
    }
}
