use crate::eval::ConfusionMatrix;

const CELL: usize = 120;
const LEFT: usize = 140;
const TOP: usize = 60;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// SVG 1.1 rendering of a confusion matrix.
///
/// Columns are the true class and rows the predicted class, positive first
/// on both axes, so the top row reads TP, FP and the bottom row FN, TN.
/// `class_names` is `[positive, negative]`. Cell shading grows with the
/// count relative to the largest cell.
pub fn render_confusion(cm: &ConfusionMatrix, class_names: [&str; 2]) -> String {
    let cells = [[cm.tp, cm.fp], [cm.fn_, cm.tn]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let width = LEFT + 2 * CELL + 20;
    let height = TOP + 2 * CELL + 70;
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    for (r, row) in cells.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let x = LEFT + c * CELL;
            let y = TOP + r * CELL;
            let shade = count as f64 / max;
            let level = (255.0 - 175.0 * shade).round() as u8;
            let ink = if shade > 0.6 { "white" } else { "black" };
            s.push_str(&format!(
                "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({level},{level},255)\" stroke=\"black\"/>\n"
            ));
            s.push_str(&format!(
                "<text class=\"count\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"22\" fill=\"{ink}\">{count}</text>\n",
                x + CELL / 2,
                y + CELL / 2 + 8
            ));
        }
    }
    for (i, name) in class_names.iter().enumerate() {
        let name = escape(name);
        s.push_str(&format!(
            "<text class=\"tick\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{name}</text>\n",
            LEFT + i * CELL + CELL / 2,
            TOP + 2 * CELL + 22
        ));
        s.push_str(&format!(
            "<text class=\"tick\" x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"14\">{name}</text>\n",
            LEFT - 10,
            TOP + i * CELL + CELL / 2 + 5
        ));
    }
    s.push_str(&format!(
        "<text class=\"axis\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"16\">true</text>\n",
        LEFT + CELL,
        TOP + 2 * CELL + 52
    ));
    let (px, py) = (24, TOP + CELL);
    s.push_str(&format!(
        "<text class=\"axis\" x=\"{px}\" y=\"{py}\" text-anchor=\"middle\" font-size=\"16\" transform=\"rotate(-90 {px} {py})\">predicted</text>\n"
    ));
    s.push_str("</svg>\n");
    s
}
