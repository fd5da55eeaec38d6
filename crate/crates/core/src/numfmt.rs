//! Fixed 17-significant-digit number output for CSV and JSON, so that
//! identical runs produce byte-identical files.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// Formats `v` with 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON formatter writing every float through [`fmt17`].
#[derive(Debug, Default, Clone, Copy)]
pub struct Fixed17;

impl Formatter for Fixed17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt17(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, Fixed17);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    to_json_vec(value).map(|v| String::from_utf8(v).expect("serde_json emits UTF-8"))
}
