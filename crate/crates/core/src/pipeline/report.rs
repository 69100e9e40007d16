//! Rendering of scoring results.

use crate::diar::der::DerReport;

/// Fixed-width scoreboard row: missed, false alarm, confusion, total, each as
/// a percentage with two decimals.
pub fn report_row(report: &DerReport) -> String {
    format!(
        "{:.2} {:.2} {:.2} {:.2}",
        report.missed_percent,
        report.false_alarm_percent,
        report.confusion_percent,
        report.der_percent
    )
}

/// Pretty JSON with the struct's stable field order.
pub fn report_json(report: &DerReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DerReport {
        DerReport {
            scored_speech_seconds: 100.0,
            missed_seconds: 3.0,
            false_alarm_seconds: 2.89,
            confusion_seconds: 0.26,
            missed_percent: 3.0,
            false_alarm_percent: 2.89,
            confusion_percent: 0.26,
            der_percent: 6.15,
        }
    }

    #[test]
    fn row_is_fixed_format() {
        assert_eq!(report_row(&sample()), "3.00 2.89 0.26 6.15");
    }

    #[test]
    fn json_round_trips_and_keeps_order() {
        let json = report_json(&sample());
        let back: DerReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.der_percent, 6.15);
        let a = json.find("scored_speech_seconds").unwrap();
        let b = json.find("missed_seconds").unwrap();
        let c = json.find("der_percent").unwrap();
        assert!(a < b && b < c);
    }
}
