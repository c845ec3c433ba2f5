//! Write simulated measurements in the raw record format, add a few faulty
//! rows, read them back and build episodes.
//!
//! cargo run --example preprocess_records -- [n_patients] [seed]

use ventrl::data::records::{read_records, write_records};
use ventrl::data::{preprocess, BuildConfig, Encoding, RawRecord, RawValue};
use ventrl::synth::{generate_records, to_raw_records, GeneratorConfig};

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_patients = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let cfg = GeneratorConfig { n_patients, seed, ..GeneratorConfig::default() };
    let mut raw = to_raw_records(&generate_records(&cfg)?);
    let faulty = |variable: &str, value: RawValue| RawRecord {
        patient_id: 0,
        time_h: 1.0,
        variable: variable.into(),
        value,
        source: 0,
    };
    raw.push(faulty("heart_rate", RawValue::Num(900.0)));
    raw.push(faulty("lactate", RawValue::Num(2.0)));
    raw.push(faulty("ph", RawValue::Text("n/a".into())));

    let path = std::env::temp_dir().join(format!("ventrl-records-{seed}.csv"));
    write_records(&path, &raw)?;
    let back = read_records(&path)?;
    println!("{} raw records written to {} and read back", back.len(), path.display());

    let (episodes, report) = preprocess(&back, &Encoding::default(), &BuildConfig::default());
    print!("{}", report.to_text());
    let hours: usize = episodes.iter().map(|e| e.len()).sum();
    println!("{} episodes, {hours} hourly steps", episodes.len());
    Ok(())
}
