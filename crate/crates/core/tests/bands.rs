use std::f64::consts::PI;

use thinnet_core::floquet::{borderline_dispersion, theta_grid};
use thinnet_core::{
    band_structure_borderline, band_structure_kirchhoff, dispersion_range, theta_sampled_bands, BandModel,
    BandStructure, GroupSpec,
};

fn group(s: &str) -> GroupSpec {
    s.parse().unwrap()
}

/// Samples per free factor so that the whole grid has about `total` points.
fn samples_for(g: &GroupSpec, total: usize) -> usize {
    let finite: usize = g.generator_orders().iter().flatten().map(|&p| p as usize).product();
    let per = (total as f64 / finite as f64).powf(1.0 / g.r0 as f64).ceil() as usize;
    per.max(16)
}

#[test]
fn sampled_spectra_lie_in_closed_form_bands() {
    for name in ["Z", "Z x Z_2", "Z x Z_3", "Z^2", "Z x Z_2 x Z_1", "Z x Z_5"] {
        let g = group(name);
        let b = band_structure_kirchhoff(&g, 60.0);
        let samples = theta_sampled_bands(&g, BandModel::Kirchhoff, samples_for(&g, 10_000), 60.0).unwrap();
        assert!(samples.len() >= 10_000, "{name}: {} samples", samples.len());
        for s in &samples {
            for e in &s.spectrum.entries {
                assert!(b.contains(e.lambda, 1e-8), "{name}: {} at theta {:?} outside bands", e.lambda, s.theta);
            }
        }
    }
}

#[test]
fn dispersion_range_is_attained_and_contiguous() {
    for name in ["Z x Z_3", "Z x Z_2 x Z_1", "Z^2 x Z_5", "Z x Z_7^2"] {
        let g = group(name);
        let (lo, hi) = dispersion_range(&g);
        let grid = theta_grid(&g, 64);
        let mut vals: Vec<f64> =
            grid.iter().map(|t| t.iter().map(|x| x.cos()).sum::<f64>() / g.rank() as f64).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - lo).abs() < 1e-2, "{name}: {} vs {lo}", vals[0]);
        assert!((vals[vals.len() - 1] - hi).abs() < 1e-12);
        // no hole wider than the sampling resolution
        let widest = vals.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(widest < 0.05, "{name}: hole {widest}");
    }
}

fn gap_around(b: &BandStructure, lambda: f64) -> Option<f64> {
    b.gaps.iter().find(|g| g.contains(lambda)).map(|g| g.len())
}

#[test]
fn gaps_exist_exactly_for_odd_torsion() {
    for p in 2..=9u32 {
        let g = GroupSpec::new(1, &[(p, 1)]).unwrap();
        let b = band_structure_kirchhoff(&g, 300.0);
        if p % 2 == 0 {
            assert!(b.gaps.is_empty(), "Z x Z_{p}: {:?}", b.gaps);
            assert_eq!(b.bands, vec![(0.0, 300.0)]);
            assert!(!b.touching.is_empty());
        } else {
            let lens: Vec<f64> = (0..3)
                .map(|l| {
                    let w = (2 * l + 1) as f64 * PI;
                    gap_around(&b, w * w).unwrap_or_else(|| panic!("Z x Z_{p}: no gap at l = {l}"))
                })
                .collect();
            assert!(lens.windows(2).all(|w| w[1] > w[0]), "Z x Z_{p}: {lens:?}");
        }
    }
}

#[test]
fn z_times_z3_gap_edges() {
    let b = band_structure_kirchhoff(&group("Z x Z_3"), 50.0);
    let a = (-0.75f64).acos();
    let first = b.spectral_gaps[0];
    assert!((first.lo - a * a).abs() < 1e-6 && (first.hi - PI * PI).abs() < 1e-6);
    let flat = b.flat_bands.iter().find(|f| (f.lambda - PI * PI).abs() < 1e-9).unwrap();
    assert_eq!(flat.multiplicity, 1);
    assert!(flat.isolated);
    assert!(b.gaps[0].contains_flat);
}

#[test]
fn a_loop_always_opens_gaps() {
    for name in ["Z", "Z x Z_2", "Z^2", "Z x Z_4", "Z^2 x Z_2^2", "Z x Z_3"] {
        let base = group(name);
        let dec = base.with_loop();
        assert!(dispersion_range(&dec).0 > -1.0);
        let b = band_structure_kirchhoff(&dec, 120.0);
        assert!(!b.gaps.is_empty(), "{}", dec);
        if base.torsion.iter().all(|&(p, _)| p % 2 == 0) {
            assert!(band_structure_kirchhoff(&base, 120.0).gaps.is_empty(), "{name}");
        }
    }
}

#[test]
fn borderline_gaps_grow_with_energy() {
    let g = group("Z");
    let b = band_structure_borderline(&g, 1.0, 1200.0).unwrap();
    let omega_gap = |w: f64| {
        b.gaps.iter().find(|gp| gp.contains(w * w)).map(|gp| gp.hi.sqrt() - gp.lo.sqrt())
    };
    assert!(omega_gap(PI / 2.0).is_none());
    let widths: Vec<f64> = (1..=10)
        .map(|l| omega_gap((2 * l + 1) as f64 * PI / 2.0).unwrap_or_else(|| panic!("no gap at l = {l}")))
        .collect();
    assert!(widths.windows(2).all(|w| w[1] >= w[0]), "{widths:?}");
    for l in 0..=10 {
        let w = (2 * l + 1) as f64 * PI;
        let f = borderline_dispersion(w, 1.0, 1);
        // rounding of the argument alone moves omega sin(omega) by about eps omega^2
        assert!((f + 1.0).abs() <= 4.0 * f64::EPSILON * w * w, "f = {f}");
    }
}

/// Largest distance from a band edge of one structure to the nearest band
/// edge of the other, in omega.
fn edge_distance(a: &BandStructure, b: &BandStructure) -> f64 {
    // touching points are edges of the unmerged branches
    let edges = |s: &BandStructure| -> Vec<f64> {
        s.bands.iter().flat_map(|&(x, y)| [x.sqrt(), y.sqrt()]).chain(s.touching.iter().map(|t| t.sqrt())).collect()
    };
    let (ea, eb) = (edges(a), edges(b));
    let one = |p: &[f64], q: &[f64]| {
        p.iter().map(|x| q.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one(&ea, &eb).max(one(&eb, &ea))
}

#[test]
fn vanishing_coupling_recovers_kirchhoff_bands() {
    for name in ["Z x Z_3", "Z x Z_2 x Z_1"] {
        let g = group(name);
        let k = band_structure_kirchhoff(&g, 120.0);
        let dev: Vec<f64> = [1.0, 1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&c| edge_distance(&band_structure_borderline(&g, c, 120.0).unwrap(), &k))
            .collect();
        assert!(dev.windows(2).all(|w| w[1] < w[0]), "{name}: {dev:?}");
        assert!(dev[4] < 1e-3, "{name}: {dev:?}");
    }
}

#[test]
fn sampled_borderline_cell_obeys_the_dispersion_relation() {
    for (name, c) in [("Z", 1.0), ("Z^2", 0.5), ("Z x Z_3", 2.0)] {
        let g = group(name);
        let r = g.rank();
        let samples = theta_sampled_bands(&g, BandModel::Borderline { c }, 16, 200.0).unwrap();
        for s in samples {
            let target = s.theta.iter().map(|t| t.cos()).sum::<f64>() / r as f64;
            for e in &s.spectrum.entries {
                let w = e.lambda.sqrt();
                let f = borderline_dispersion(w, c, r);
                // flat bands at omega = l pi satisfy the cell problem without f
                let on_flat = r >= 2 && ((w / PI) - (w / PI).round()).abs() < 1e-9;
                assert!(on_flat || (f - target).abs() < 1e-8, "{name}: f({w}) = {f}, expected {target}");
            }
        }
    }
}
