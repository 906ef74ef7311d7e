pub mod attn;
pub mod augment;
pub mod embed;
pub mod extract;
pub mod fps;
pub mod model;
pub mod probe;
pub mod search;

use std::str::FromStr;

/// A value that may be given as `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auto<T>(pub Option<T>);

impl<T: FromStr> FromStr for Auto<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Auto(None));
        }
        s.parse().map(|v| Auto(Some(v))).map_err(|_| format!("expected a number or 'auto', got {s:?}"))
    }
}
