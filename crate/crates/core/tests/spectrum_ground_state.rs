use nematicon::groundstate::{minimize_charge, FlowOptions, GroundState};
use nematicon::spectrum::*;
use nematicon::{MediumParams, RadialField, RadialGrid};
use std::sync::OnceLock;

fn state() -> &'static GroundState {
    static GS: OnceLock<GroundState> = OnceLock::new();
    GS.get_or_init(|| {
        let g = RadialGrid::new(40.0, 1024).unwrap();
        minimize_charge(&g, 6.0, &MediumParams::default(), &FlowOptions::default())
            .unwrap()
            .ground()
            .unwrap()
    })
}

#[test]
fn quadratic_form_matches_second_difference_of_action() {
    let gs = state();
    let op = assemble_sector(gs, 0, SectorBlock::Amplitude).unwrap();
    let g = gs.v.grid();
    let cases = [
        (1.0, 0.0, 1.5, 2.0),
        (0.0, 1.0, 2.0, 1.0),
        (0.7, -0.4, 1.0, 3.0),
        (0.3, 0.9, 3.0, 0.8),
    ];
    for (ca, cb, wa, wb) in cases {
        let eta = RadialField::from_fn(g, |r| ca * (-r * r / (wa * wa)).exp());
        let vt = RadialField::from_fn(g, |r| cb * (1.0 + r) * (-r * r / (wb * wb)).exp());
        let quad = op.quadratic_form(&eta, Some(&vt));
        let fd = action_second_difference(gs, &eta, &vt, 1e-4).unwrap();
        assert!((quad - fd).abs() < 1e-4 * (1.0 + fd.abs()), "{quad} vs {fd}");
    }
}

#[test]
fn zero_modes_align_with_symmetry_generators() {
    let gs = state();
    let (dv, dphi) = translation_mode(gs);
    let op1 = assemble_sector(gs, 1, SectorBlock::Amplitude).unwrap();
    let m1 = op1.eigensolve(1).unwrap();
    assert!(mode_overlap(&m1[0], &dv, Some(&dphi)).unwrap() > 0.999);
    assert!(m1[0].value.abs() < 1e-3);

    let op2 = assemble_sector(gs, 0, SectorBlock::Phase).unwrap();
    let m2 = op2.eigensolve(1).unwrap();
    assert!(mode_overlap(&m2[0], &gs.v, None).unwrap() > 0.999);
    assert!(m2[0].value.abs() < 1e-8);
}

#[test]
fn higher_sectors_are_positive() {
    let gs = state();
    for k in 2..=3 {
        let op = assemble_sector(gs, k, SectorBlock::Amplitude).unwrap();
        assert!(op.eigensolve(1).unwrap()[0].value > 0.0);
    }
}

#[test]
fn amplitude_sector_zero_has_one_negative_direction() {
    let rep = coercivity_probe(state(), &SpectrumOptions::default()).unwrap();
    let s0 = rep.sector(SectorBlock::Amplitude, 0).unwrap();
    assert_eq!(s0.negative_count, 1);
    assert!(rep.tau > 0.0);
    assert_eq!(rep.verdict, Verdict::Coercive);
    for s in &rep.sectors {
        assert!(s.symmetry_defect < 1e-10);
    }
}

#[test]
fn kernel_scan_is_stable_across_tolerances() {
    let gs = state();
    let base = kernel_dimension_scan(gs, 3, 1e-6).unwrap();
    assert_eq!(base, vec![(0, 0), (1, 1), (2, 0), (3, 0)]);
    assert_eq!(kernel_dimension_scan(gs, 3, 1e-7).unwrap(), base);
    assert_eq!(kernel_dimension_scan(gs, 3, 1e-5).unwrap(), base);
}

#[test]
fn translation_defect_is_small() {
    assert!(translation_defect(state()).unwrap() < 1e-3);
}
