//! Five-point Gauss–Legendre rule on `[0, 1]`.

/// Nodes on `[0, 1]`.
pub const NODES: [f64; 5] = [
    0.046_910_077_030_668_02,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_331_9,
];

/// Weights summing to one.
pub const WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_71,
    0.239_314_335_249_683_1,
    0.284_444_444_444_444_5,
    0.239_314_335_249_683_1,
    0.118_463_442_528_094_71,
];
