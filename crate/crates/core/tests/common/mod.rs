#![allow(dead_code)]

use std::sync::OnceLock;

use spinbath_core::experiments::{calibrate_bath, reference_template, CalibrationTargets};
use spinbath_core::*;

pub fn mhz(f: f64) -> AngularFrequency {
    mhz_to_angular(f).unwrap()
}

/// Bath calibrated to the five reference points, computed once per binary.
pub fn calibrated() -> &'static BathSpec {
    static BATH: OnceLock<BathSpec> = OnceLock::new();
    BATH.get_or_init(|| calibrate_bath(&CalibrationTargets::reference(), &reference_template(us(10.0)).unwrap()).unwrap().bath)
}
