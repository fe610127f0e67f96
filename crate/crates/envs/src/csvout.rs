use serde::Serialize;

/// Comma-separated text with a header row, even when there are no rows.
pub(crate) fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(header).expect("in-memory CSV write");
    for row in rows {
        writer.serialize(row).expect("in-memory CSV write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}
