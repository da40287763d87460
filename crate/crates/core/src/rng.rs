//! Counter-based random numbers.
//!
//! Every draw is a pure function of (seed, domain, particle, step, component),
//! so ensembles replay bit-identically regardless of scheduling or thread
//! count. The generator is a splitmix64-style mix applied to the counter
//! words; statistical quality is ample for Monte Carlo ensembles.

/// Domain tags keep independent streams from colliding.
pub mod domain {
    /// Initial-condition sampling.
    pub const INIT: u64 = 1;
    /// Brownian increments of the viscous propagation.
    pub const NOISE: u64 = 2;
    /// Feedback perturbations in optimality checks.
    pub const PERTURB: u64 = 3;
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Raw 64-bit output for a counter tuple.
#[inline]
pub fn counter_u64(seed: u64, dom: u64, i: u64, j: u64, k: u64) -> u64 {
    let mut z = mix64(seed ^ GAMMA);
    for word in [dom, i, j, k] {
        z = mix64(z ^ word.wrapping_mul(GAMMA).wrapping_add(0x2545_f491_4f6c_dd1d));
    }
    z
}

/// Uniform in the open interval (0, 1).
#[inline]
pub fn uniform(seed: u64, dom: u64, i: u64, j: u64, k: u64) -> f64 {
    let bits = counter_u64(seed, dom, i, j, k) >> 11;
    (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal draw via Box-Muller on two counter uniforms.
#[inline]
pub fn normal(seed: u64, dom: u64, i: u64, j: u64, k: u64) -> f64 {
    let u1 = uniform(seed, dom, i, j, 2 * k);
    let u2 = uniform(seed, dom, i, j, 2 * k + 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Derive an independent sub-seed, e.g. one noise stream per sweep entry.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    counter_u64(master, 0xdead_beef, index, 0, 0)
}
