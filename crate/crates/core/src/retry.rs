use std::thread;
use std::time::Duration;

/// Runs `op` up to `max_retries + 1` times, doubling the pause between
/// attempts starting from `base_delay`. Returns the last error on failure.
pub fn with_retries<T, E, F>(max_retries: u32, base_delay: Duration, mut op: F) -> Result<T, E>
where
    F: FnMut() -> Result<T, E>,
{
    let mut delay = base_delay;
    let mut attempt = 0;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if attempt >= max_retries => return Err(e),
            Err(e) => {
                log::debug!("attempt {} failed, retrying", attempt + 1);
                drop(e);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                delay = delay.saturating_mul(2);
                attempt += 1;
            }
        }
    }
}
