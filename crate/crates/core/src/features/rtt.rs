use crate::error::FeatureError;

/// Shortest of the measured round trips, rounded to the nearest ten
/// milliseconds (ties away from zero). No samples means no RTT.
pub fn normalize_rtt(samples: &[f64]) -> Result<Option<u32>, FeatureError> {
    if let Some(&bad) = samples.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(FeatureError::InvalidRtt(bad));
    }
    let Some(min) = samples.iter().copied().reduce(f64::min) else {
        return Ok(None);
    };
    let rounded = (min / 10.0).round() * 10.0;
    Ok(Some(rounded.min(f64::from(u32::MAX / 10 * 10)) as u32))
}
