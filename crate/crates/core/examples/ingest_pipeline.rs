//! From raw executions to model-ready tick series: parse, split by activity
//! regime, convert mids to half-tick returns and build the intraday profile.

use std::fmt::Write as _;

use tickms::ingest::{activity_profile, build_tick_series, parse_trades, split_regimes};

fn synthetic_trades() -> String {
    let mut csv = String::from("date,timestamp_ms,price,volume,side,bid,ask\n");
    let mut bid = 1000i64;
    let mut spread = 1i64;
    let mut state = 12345u64;
    let mut ts = 34_200_000u64 + 1_000;
    while ts < 57_600_000 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (state >> 33) % 100;
        match u {
            0..=5 => spread = 3 - spread,
            6..=8 => bid += 1,
            9..=11 => bid -= 1,
            _ => {}
        }
        let ask = bid + spread;
        let side = if u.is_multiple_of(2) { "buy" } else { "sell" };
        let price = if side == "buy" { ask } else { bid };
        writeln!(csv, "2024-03-01,{ts},{:.2},100,{side},{:.2},{:.2}", price as f64 / 100.0, bid as f64 / 100.0, ask as f64 / 100.0)
            .unwrap();
        ts += 2_000 + (state >> 50) % 3_000;
    }
    csv.push_str("2024-03-01,40000000,10.00,100,buy,10.05,10.01\n");
    csv
}

fn main() -> tickms::Result<()> {
    let report = parse_trades(synthetic_trades().as_bytes())?;
    println!("{} records, {} rejected, {} collapsed", report.records.len(), report.errors.len(), report.collapsed);
    for e in &report.errors {
        println!("  line {}: {}", e.line, e.message);
    }
    let split = split_regimes(&report.records);
    println!("high {} / low {} / trimmed {}", split.high.len(), split.low.len(), split.trimmed);
    for (name, recs) in [("high", &split.high), ("low", &split.low)] {
        let series = build_tick_series(recs, 0.01)?;
        println!("{name}: {} segments, {} returns, {} dropped", series.segments.len(), series.return_count(), series.dropped_count);
    }
    let profile = activity_profile(&report.records, 0.01)?;
    let busiest = profile.counts_total.iter().enumerate().max_by_key(|(_, c)| **c).map(|(i, _)| i).unwrap_or(0);
    println!("busiest 6-minute bin starts at {} ms", profile.bin_starts_ms[busiest]);
    Ok(())
}
