//! On-disk field format.
//!
//! ```text
//! format_version=1
//! n_r=40
//! ...
//! payload_crc32=1a2b3c4d
//! <blank line>
//! <n f64 values, little-endian><n f64 controls, little-endian>
//! ```
//!
//! Header lines are UTF-8 `key=value` pairs in a fixed order; floats use the shortest
//! representation that parses back to the same bits. Payload index is
//! `(i_r * n_xi_a + i_xi_a) * n_xi_t + i_xi_t`. Controls are stored as signed turn
//! rates.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dynamics::{Engagement, VehicleParams};
use crate::geometry::WezParams;
use crate::solver::{FieldMeta, GridSpec, ValueField};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Everything in the header block besides the checksum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldFileHeader {
    pub format_version: u32,
    pub grid: GridSpec,
    pub meta: FieldMeta,
    pub payload_crc32: u32,
}

fn push_vehicle(lines: &mut Vec<(String, String)>, prefix: &str, v: &VehicleParams) {
    let mut put = |k: &str, x: f64| lines.push((format!("{prefix}_{k}"), x.to_string()));
    put("speed", v.speed);
    put("max_turn_rate", v.max_turn_rate);
    put("weapon_speed_ratio", v.wez.weapon_speed_ratio);
    put("weapon_range", v.wez.weapon_range);
    put("capture_radius", v.wez.capture_radius);
}

impl FieldFileHeader {
    fn lines(&self) -> Vec<(String, String)> {
        let g = &self.grid;
        let m = &self.meta;
        let mut lines = vec![
            ("format_version".to_string(), self.format_version.to_string()),
            ("n_r".into(), g.n_r.to_string()),
            ("n_xi_a".into(), g.n_xi_a.to_string()),
            ("n_xi_t".into(), g.n_xi_t.to_string()),
            ("r_max".into(), g.r_max.to_string()),
            ("variant".into(), m.variant.tag().to_string()),
            ("sigma".into(), m.sigma.to_string()),
            ("penalty".into(), m.penalty.to_string()),
            ("converged".into(), m.converged.to_string()),
            ("iterations".into(), m.iterations.to_string()),
        ];
        push_vehicle(&mut lines, "agent", &m.engagement.agent);
        push_vehicle(&mut lines, "target", &m.engagement.target);
        lines.push(("payload_crc32".into(), format!("{:08x}", self.payload_crc32)));
        lines
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.lines() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out.push('\n');
        out
    }

    fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedHeader(format!("line without `=`: {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::MalformedHeader(format!("missing key `{k}`")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::MalformedHeader(format!("bad value for `{k}`: {v:?}")))
        }
        let f = |k: &str| -> Result<f64> { num(k, get(k)?) };
        let u = |k: &str| -> Result<usize> { num(k, get(k)?) };

        let format_version: u32 = num("format_version", get("format_version")?)?;
        if format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: format_version,
                expected: FORMAT_VERSION,
            });
        }
        let vehicle = |p: &str| -> Result<VehicleParams> {
            Ok(VehicleParams {
                speed: f(&format!("{p}_speed"))?,
                max_turn_rate: f(&format!("{p}_max_turn_rate"))?,
                wez: WezParams {
                    weapon_speed_ratio: f(&format!("{p}_weapon_speed_ratio"))?,
                    weapon_range: f(&format!("{p}_weapon_range"))?,
                    capture_radius: f(&format!("{p}_capture_radius"))?,
                },
            })
        };
        let grid = GridSpec {
            n_r: u("n_r")?,
            n_xi_a: u("n_xi_a")?,
            n_xi_t: u("n_xi_t")?,
            r_max: f("r_max")?,
        };
        grid.validate()
            .map_err(|e| Error::MalformedHeader(format!("invalid grid: {e}")))?;
        let crc = get("payload_crc32")?;
        let payload_crc32 = u32::from_str_radix(crc, 16)
            .map_err(|_| Error::MalformedHeader(format!("bad checksum {crc:?}")))?;
        Ok(Self {
            format_version,
            grid,
            meta: FieldMeta {
                variant: get("variant")?.parse()?,
                engagement: Engagement {
                    agent: vehicle("agent")?,
                    target: vehicle("target")?,
                },
                sigma: f("sigma")?,
                penalty: f("penalty")?,
                converged: num("converged", get("converged")?)?,
                iterations: u("iterations")?,
            },
            payload_crc32,
        })
    }
}

fn payload_bytes(field: &ValueField) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(16 * field.grid.len());
    for x in field.values.iter().chain(&field.controls) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    bytes
}

/// Serialize a field to bytes.
pub fn encode_field(field: &ValueField) -> Result<Vec<u8>> {
    field.check_shape()?;
    let payload = payload_bytes(field);
    let header = FieldFileHeader {
        format_version: FORMAT_VERSION,
        grid: field.grid,
        meta: field.meta,
        payload_crc32: crc32fast::hash(&payload),
    };
    let mut out = header.render().into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parse bytes produced by [`encode_field`].
pub fn decode_field(bytes: &[u8]) -> Result<ValueField> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::MalformedHeader("no blank line ends the header".into()))?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    let header = FieldFileHeader::parse(text)?;
    let payload = &bytes[end + 2..];
    let n = header.grid.len();
    let expected = 16 * n;
    if payload.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let actual = crc32fast::hash(payload);
    if actual != header.payload_crc32 {
        return Err(Error::ChecksumMismatch {
            expected: header.payload_crc32,
            actual,
        });
    }
    let mut words = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let values: Vec<f64> = words.by_ref().take(n).collect();
    let controls: Vec<f64> = words.collect();
    Ok(ValueField {
        grid: header.grid,
        values,
        controls,
        meta: header.meta,
    })
}

pub fn save_field(field: &ValueField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_field(field)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ValueField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes)
}

/// Peek at just the header of a field file.
pub fn read_header(path: impl AsRef<Path>) -> Result<FieldFileHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::MalformedHeader("no blank line ends the header".into()))?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    FieldFileHeader::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Variant;
    use proptest::prelude::*;

    fn field(n_r: usize, n_a: usize, n_t: usize, seed: u64) -> ValueField {
        let grid = GridSpec::new(n_r, n_a, n_t, 7.5).unwrap();
        let meta = FieldMeta {
            variant: Variant::Adversarial,
            engagement: Engagement::default(),
            sigma: 0.1,
            penalty: 100.0,
            converged: false,
            iterations: 42,
        };
        let mut f = ValueField::zeros(grid, meta);
        let mut x = seed;
        for i in 0..grid.len() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f.values[i] = f64::from_bits(x >> 12 | 0x3ff0_0000_0000_0000) - 1.0;
            f.controls[i] = [-1.0, 0.0, 1.0][(x >> 61) as usize % 3];
        }
        f
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = field(4, 5, 6, 9);
        let back = decode_field(&encode_field(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.values), bits(&f.values));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.field");
        let f = field(3, 4, 4, 1);
        save_field(&f, &path).unwrap();
        assert_eq!(load_field(&path).unwrap(), f);
        assert_eq!(read_header(&path).unwrap().meta, f.meta);
    }

    #[test]
    fn corrupt_payload_fails_checksum() {
        let mut bytes = encode_field(&field(3, 3, 3, 2)).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x10;
        assert!(matches!(
            decode_field(&bytes),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn short_payload_is_truncated() {
        let bytes = encode_field(&field(3, 3, 3, 3)).unwrap();
        assert!(matches!(
            decode_field(&bytes[..bytes.len() - 8]),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn header_dimension_mismatch_is_truncated() {
        let bytes = encode_field(&field(3, 3, 3, 4)).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let patched = text.replacen("n_r=3", "n_r=4", 1);
        let head_len = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        let mut out = patched.as_bytes()[..head_len].to_vec();
        out.extend_from_slice(&bytes[head_len..]);
        assert!(matches!(
            decode_field(&out),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let bytes = encode_field(&field(3, 3, 3, 5)).unwrap();
        let text = String::from_utf8_lossy(&bytes).replacen("format_version=1", "format_version=7", 1);
        assert!(matches!(
            decode_field(text.as_bytes()),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_fields_round_trip(
            n_r in 3usize..6, n_a in 3usize..6, n_t in 3usize..6,
            seed: u64, r_max in 0.1f64..100.0, sigma in 0.0f64..3.0,
        ) {
            let mut f = field(n_r, n_a, n_t, seed);
            f.grid.r_max = r_max;
            f.meta.sigma = sigma;
            let back = decode_field(&encode_field(&f).unwrap()).unwrap();
            prop_assert_eq!(back.grid.r_max.to_bits(), r_max.to_bits());
            prop_assert_eq!(back, f);
        }
    }
}
