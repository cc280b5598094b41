//! Fixed 8-point Gauss–Legendre rule.

const NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `(offset, weight)` pairs for `∫₀ʰ`, offsets measured from either end.
pub(crate) fn gauss_legendre(h: f64) -> impl Iterator<Item = (f64, f64)> {
    NODES.iter().zip(WEIGHTS).map(move |(x, w)| (0.5 * h * (1.0 - x), 0.5 * h * w))
}
