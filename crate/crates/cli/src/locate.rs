//! Maps a dotted config path such as `bandwidth.schedule.beta` to the line of
//! the config text that holds its last key.

/// 1-based line of the key named by the last non-index segment of `path`,
/// found by matching the named segments in order through the text.
pub fn line_of_path(text: &str, path: &str) -> Option<usize> {
    let keys: Vec<&str> = path.split('.').filter(|s| !s.is_empty() && s.parse::<usize>().is_err()).collect();
    let mut pos = 0usize;
    let mut found = None;
    for key in keys {
        let needle = format!("\"{key}\"");
        match text[pos..].find(&needle) {
            Some(off) => {
                pos += off;
                found = Some(pos);
                pos += needle.len();
            }
            None => break,
        }
    }
    found.map(|p| text[..p].matches('\n').count() + 1)
}
