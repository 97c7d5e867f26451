use crate::model::LanguageId;

/// Pull the program out of a model reply.
///
/// Takes the last fenced block (an unterminated fence runs to the end of the
/// reply), else the last `<code>...</code>` span. Replies with neither yield
/// an empty string, which downstream judging treats as a compilation error.
pub fn extract_code(reply: &str) -> String {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match current.take() {
            None if is_fence => current = Some(Vec::new()),
            None => {}
            Some(block) if is_fence => blocks.push(block),
            Some(mut block) => {
                block.push(line);
                current = Some(block);
            }
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }
    if let Some(block) = blocks.pop() {
        return block.join("\n");
    }
    if let Some(end) = reply.rfind("</code>") {
        if let Some(start) = reply[..end].rfind("<code>") {
            return reply[start + "<code>".len()..end].trim_matches('\n').to_string();
        }
    }
    String::new()
}

/// Language named on the last `TARGET: <language>` line, if it parses.
pub fn parse_final_answer(reply: &str) -> Option<LanguageId> {
    let line = reply.lines().rev().find_map(|l| {
        let t = l.trim().trim_start_matches(['*', '-', '>', ' ']);
        let (key, value) = t.split_once(':')?;
        key.trim().trim_matches('*').eq_ignore_ascii_case("target").then_some(value)
    })?;
    let value = line.trim().trim_matches(|c: char| matches!(c, '`' | '*' | '"' | '\'' | '.' | ' '));
    value.parse().ok()
}
