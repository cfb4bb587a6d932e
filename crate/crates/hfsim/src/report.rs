//! CSV and JSON emission for timelines, ledgers, and run summaries.
//! Formatting is exact and deterministic: rational timestamps are printed
//! with fixed decimal places computed by integer arithmetic.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::sim::{MemOpLedger, Time, Timeline};

/// Exact decimal rendering of a rational number of seconds, truncated to
/// `decimals` fractional digits.
pub fn format_seconds(t: &Time, decimals: usize) -> String {
    let sign = if t.is_negative() { "-" } else { "" };
    let num = t.numer().abs();
    let den = t.denom().abs();
    let int_part = &num / &den;
    let mut rem = &num % &den;
    let mut frac = String::with_capacity(decimals);
    let ten = BigInt::from(10);
    for _ in 0..decimals {
        if rem.is_zero() {
            break;
        }
        rem *= &ten;
        let digit = &rem / &den;
        frac.push_str(&digit.to_string());
        rem %= &den;
    }
    if frac.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

/// Timeline rows: `event,chunk,phase,src,dst,bytes,t_start,t_end`.
pub fn timeline_to_csv(timeline: &Timeline) -> String {
    let mut out = String::from("event,chunk,phase,src,dst,bytes,t_start,t_end\n");
    for e in &timeline.events {
        let chunk = e.chunk.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.kind.name(),
            chunk,
            e.phase.name(),
            e.src,
            e.dst,
            e.bytes,
            format_seconds(&e.t_start, 12),
            format_seconds(&e.t_end, 12),
        ));
    }
    out
}

/// Ledger rows: `node,direction,phase,bytes` plus per-node totals.
pub fn ledger_to_csv(ledger: &MemOpLedger) -> String {
    let mut out = String::from("node,direction,phase,bytes\n");
    for (i, n) in ledger.per_node.iter().enumerate() {
        for (phase, bytes) in [
            ("d2h", n.reads.d2h),
            ("reduce", n.reads.reduce),
            ("ib_send", n.reads.ib_send),
            ("ib_recv", n.reads.ib_recv),
            ("h2d", n.reads.h2d),
        ] {
            out.push_str(&format!("{i},read,{phase},{bytes}\n"));
        }
        for (phase, bytes) in [
            ("d2h", n.writes.d2h),
            ("reduce", n.writes.reduce),
            ("ib_send", n.writes.ib_send),
            ("ib_recv", n.writes.ib_recv),
            ("h2d", n.writes.h2d),
        ] {
            out.push_str(&format!("{i},write,{phase},{bytes}\n"));
        }
        out.push_str(&format!("{i},total,all,{}\n", n.total()));
    }
    out
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> crate::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// f64 view of a rational, for summaries.
pub fn time_as_f64(t: &Time) -> f64 {
    t.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn r(n: i64, d: i64) -> Time {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn exact_decimal_formatting() {
        assert_eq!(format_seconds(&r(1, 1), 12), "1");
        assert_eq!(format_seconds(&r(1, 2), 12), "0.5");
        assert_eq!(format_seconds(&r(1, 3), 6), "0.333333");
        assert_eq!(format_seconds(&r(-3, 2), 12), "-1.5");
        assert_eq!(format_seconds(&r(1, 1_000_000), 12), "0.000001");
    }

    #[test]
    fn formatting_is_stable() {
        let t = r(123456789, 1000000007);
        assert_eq!(format_seconds(&t, 12), format_seconds(&t, 12));
    }
}
