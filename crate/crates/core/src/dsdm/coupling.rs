/// Pairwise decision correlation with algorithmic coupling:
/// `base + δ · D_i · D_j · overlap`, clamped to [−1, 1].
pub fn coupling_correlation(
    base: f64,
    delta: f64,
    d_i: bool,
    d_j: bool,
    vendor_overlap: f64,
) -> f64 {
    let raw = base + delta * f64::from(u8::from(d_i && d_j)) * vendor_overlap;
    if !(-1.0..=1.0).contains(&raw) {
        log::warn!("coupling correlation {raw} outside [-1, 1]; clamped");
    }
    raw.clamp(-1.0, 1.0)
}
