//! Dyadic time grid for event timestamps.
//!
//! Every event time is a multiple of [`TICK`] = 2^-44.  With the horizon
//! capped at [`MAX_HORIZON`] = 512, tick counts stay below 2^53, so sums and
//! differences of grid times are exact in f64.  This is what makes time
//! reversal an exact involution (`reverse(reverse(H, t), t) == restrict(H, t)`
//! bit for bit) and lets all time comparisons be plain `==`/`<` with no
//! epsilon.  The grid is fine enough that quantization shifts each sampled
//! time by at most 2^-45 time units.

/// Resolution of the time grid: 2^-44 time units.
pub const TICK: f64 = 1.0 / ((1u64 << 44) as f64);

/// Largest representable horizon; beyond this, tick counts would leave the
/// exactly-representable integer range of f64.
pub const MAX_HORIZON: f64 = 512.0;

const SCALE: f64 = (1u64 << 44) as f64;

/// Snap a nonnegative time to the grid.
pub fn snap(t: f64) -> f64 {
    (t * SCALE).round() * TICK
}

/// Tick count of a grid-aligned time.
pub fn to_ticks(t: f64) -> u64 {
    (t * SCALE).round() as u64
}

/// Time corresponding to a tick count.
pub fn from_ticks(ticks: u64) -> f64 {
    ticks as f64 * TICK
}

/// True if `t` lies exactly on the grid (and in range).
pub fn is_aligned(t: f64) -> bool {
    t >= 0.0 && t <= MAX_HORIZON && from_ticks(to_ticks(t)) == t
}
