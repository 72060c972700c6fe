//! JSON encoding for extended reals: finite values as numbers, `+inf` and
//! `-inf` as the strings `"inf"` and `"-inf"`.

use serde::ser::SerializeSeq;
use serde::Serializer;

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn serialize_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    struct Ext(f64);
    impl serde::Serialize for Ext {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            serialize(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&Ext(x))?;
    }
    seq.end()
}
