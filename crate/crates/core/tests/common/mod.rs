#![allow(dead_code)]

use std::f64::consts::PI;

use bloch_core::{Layer, LayeredOptions, PeriodicMedium};

pub struct Case {
    pub name: &'static str,
    pub medium: PeriodicMedium,
    pub cutoff: usize,
}

pub fn two_phase(contrast: f64) -> PeriodicMedium {
    PeriodicMedium::layered(
        &[Layer::new(0.5, 1.0, 1.0), Layer::new(0.5, contrast, 1.0)],
        LayeredOptions::default(),
    )
    .unwrap()
}

/// `A0 = (2 + cos 2πy₁) I`, `ρ0 = 1` on an `m × m` grid.
pub fn cosine_field(m: usize) -> PeriodicMedium {
    PeriodicMedium::sampled(vec![m, m], |y| {
        let s = 2.0 + (2.0 * PI * y[0]).cos();
        (vec![s, 0.0, 0.0, s], 1.0)
    })
    .unwrap()
}

pub fn corpus() -> Vec<Case> {
    vec![
        Case {
            name: "homogeneous 1D",
            medium: PeriodicMedium::isotropic(1, 1.0, 1.0).unwrap(),
            cutoff: 64,
        },
        Case {
            name: "homogeneous 2D",
            medium: PeriodicMedium::isotropic(2, 1.0, 1.0).unwrap(),
            cutoff: 12,
        },
        Case {
            name: "layered contrast 4",
            medium: two_phase(4.0),
            cutoff: 64,
        },
        Case {
            name: "layered contrast 100",
            medium: two_phase(100.0),
            cutoff: 64,
        },
        Case {
            name: "cosine field 2D",
            medium: cosine_field(64),
            cutoff: 12,
        },
    ]
}
