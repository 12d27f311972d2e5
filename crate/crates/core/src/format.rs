//! Fixed-precision number rendering for the stable file formats.

use serde::Serializer;
use serde_json::value::RawValue;

/// Renders `x` as a plain decimal with 17 significant digits, enough to
/// round-trip any finite `f64` exactly.
pub fn sig17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (16 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // log10 can land one decade off near powers of ten
    if s.parse::<f64>().ok() == Some(x) {
        s
    } else {
        format!("{:.*}", decimals + 1, x)
    }
}

/// `serialize_with` adapter writing an `f64` as a 17-significant-digit JSON
/// number.
pub fn ser_sig17<S: Serializer>(x: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::{Error, Serialize};
    if !x.is_finite() {
        return serializer.serialize_none();
    }
    let raw = RawValue::from_string(sig17(*x)).map_err(S::Error::custom)?;
    raw.serialize(serializer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_renderings() {
        assert_eq!(sig17(0.5), "0.50000000000000000");
        assert_eq!(sig17(1.0), "1.0000000000000000");
        assert_eq!(sig17(0.0), "0.0000000000000000");
        assert_eq!(sig17(1.0 / 3.0), "0.33333333333333331");
    }

    proptest! {
        #[test]
        fn sig17_round_trips(x in -1e6f64..1e6) {
            prop_assert_eq!(sig17(x).parse::<f64>().unwrap(), x);
        }

        #[test]
        fn sig17_round_trips_small(x in 1e-300f64..1.0) {
            prop_assert_eq!(sig17(x).parse::<f64>().unwrap(), x);
        }
    }
}
