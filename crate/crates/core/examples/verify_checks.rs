//! Runs every theory check and prints one line per record.

use ntkae::theory::verify_all;

fn main() -> ntkae::Result<()> {
    let records = verify_all(0)?;
    for r in &records {
        println!("{r}");
    }
    let hard = records.iter().filter(|r| r.is_hard_failure()).count();
    println!("{} checks, {hard} hard failures", records.len());
    Ok(())
}
