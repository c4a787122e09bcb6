pub mod audit;
pub mod bench;
pub mod eval;
pub mod reconstruct;
pub mod synth;
pub mod train;

use crate::{validation, CliError};

/// Parse `AxB` pairs such as `--size 64x64` or `--grid 8x8`.
pub fn parse_pair(s: &str, what: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| validation(format!("{what} expects AxB, got '{s}'")))?;
    let a = a
        .parse::<usize>()
        .map_err(|_| validation(format!("{what} expects AxB, got '{s}'")))?;
    let b = b
        .parse::<usize>()
        .map_err(|_| validation(format!("{what} expects AxB, got '{s}'")))?;
    if a == 0 || b == 0 {
        return Err(validation(format!("{what} extents must be positive")));
    }
    Ok((a, b))
}

/// Group thousands for readable parameter and MAC counts.
pub fn thousands(n: u128) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
