use greenop::fixtures::{generate_coefficients, Generator};
use greenop::io::{read_any_from, write_field_to};
use greenop::lattice::{forward_transform, inverse_transform};
use greenop::norms::{conjugate_pair, is_admissible, is_compatible, lorentz_norm_values, Exponent, ExponentPair, LorentzIndex};
use greenop::operator::{apply_l, apply_l_adjoint};
use greenop::{Field, SpaceTimeGrid, C64};
use num_rational::Ratio;
use proptest::prelude::*;

fn grid() -> SpaceTimeGrid {
    SpaceTimeGrid::new(1, 16, 8.0, 16, 4.0).unwrap()
}

fn field(values: &[(f64, f64)]) -> Field {
    let g = grid();
    let mut u = Field::from_fn(&g, |_, _| C64::new(0.0, 0.0));
    for (z, &(re, im)) in u.data_mut().iter_mut().zip(values.iter().cycle()) {
        *z = C64::new(re, im);
    }
    u
}

fn inner(u: &Field, v: &Field) -> C64 {
    u.data().iter().zip(v.data()).map(|(a, b)| a * b.conj()).sum()
}

fn values() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 256)
}

fn exponent() -> impl Strategy<Value = Exponent> {
    (1i64..=24).prop_flat_map(|d| (0..=d).prop_map(move |a| Exponent::from_reciprocal(Ratio::new(a, d)).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip(v in values()) {
        let u = field(&v);
        let back = inverse_transform(&forward_transform(&u));
        let err = u.data().iter().zip(back.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * (1.0 + u.norm()));
    }

    #[test]
    fn field_files_round_trip_exactly(v in values()) {
        let u = field(&v);
        let mut buf = Vec::new();
        write_field_to(&mut buf, &u).unwrap();
        let back = read_any_from(&mut buf.as_slice()).unwrap().into_field(u.grid()).unwrap();
        prop_assert_eq!(back, u);
    }

    #[test]
    fn compatible_iff_conjugate_admissible(r in exponent(), q in exponent(), n in 1usize..=3) {
        let p = ExponentPair::new(r, q);
        prop_assert_eq!(is_compatible(p, n), is_admissible(conjugate_pair(p), n));
        prop_assert_eq!(r.conjugate().conjugate(), r);
    }

    #[test]
    fn lorentz_norms_decrease_in_the_second_index(
        mags in prop::collection::vec(0.0..5.0f64, 1..64),
        p in 1.0..6.0f64,
        s1 in 1.0..8.0f64,
        ds in 0.0..8.0f64,
    ) {
        let a = lorentz_norm_values(&mags, LorentzIndex::new(p, s1).unwrap(), 0.5).unwrap();
        let b = lorentz_norm_values(&mags, LorentzIndex::new(p, s1 + ds).unwrap(), 0.5).unwrap();
        let weak = lorentz_norm_values(&mags, LorentzIndex::weak(p), 0.5).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12) + 1e-300);
        prop_assert!(weak <= b * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn lorentz_diagonal_is_lebesgue(mags in prop::collection::vec(0.0..5.0f64, 1..64), p in 1.0..6.0f64) {
        let lorentz = lorentz_norm_values(&mags, LorentzIndex::lebesgue(p), 0.25).unwrap();
        let lebesgue = (mags.iter().map(|m| m.powf(p)).sum::<f64>() * 0.25).powf(1.0 / p);
        prop_assert!((lorentz - lebesgue).abs() <= 1e-12 * (1.0 + lebesgue));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn operator_and_adjoint_are_dual(seed in 0u64..1000, v in values(), w in values()) {
        let g = grid();
        let gen = Generator::RandomElliptic { lambda: 0.5, big_lambda: 2.0, real_symmetric: false, time_dependent: true, band: 3 };
        let c = generate_coefficients(&gen, &g, seed).unwrap();
        let (u, v) = (field(&v), field(&w));
        let lhs = inner(&apply_l(&c, &u).unwrap(), &v);
        let rhs = inner(&u, &apply_l_adjoint(&c, &v).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>()) {
        let g = grid();
        let gen = Generator::RandomElliptic { lambda: 0.2, big_lambda: 5.0, real_symmetric: false, time_dependent: true, band: 2 };
        prop_assert_eq!(generate_coefficients(&gen, &g, seed).unwrap(), generate_coefficients(&gen, &g, seed).unwrap());
    }
}
