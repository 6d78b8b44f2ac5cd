"""Writes the hOCR golden corpus and its expected parses.

The expected values are computed here, independently of the C++ parser:
word text is the entity-decoded concatenation of the text inside the word
element, trimmed; whitespace-only words are dropped; boxes are clipped to
the page. Rerunning the script reproduces the files byte for byte.
"""
import json
import random
from pathlib import Path

OUT = Path(__file__).parent / "hocr"
LEXICON = ["Invoice", "Total", "date", "R&D", "café", "Müller", "<none>", "42.00", "a", "Name:",
           "x_y", "\"quoted\"", "it's", "ID#7", "naïve", "A&B<C>"]


def escape(text, rng):
    out = []
    for ch in text:
        if ch == "&":
            out.append("&amp;")
        elif ch == "<":
            out.append("&lt;")
        elif ch == ">":
            out.append(rng.choice(["&gt;", ">"]))
        elif ch == '"':
            out.append(rng.choice(["&quot;", '"']))
        elif ch == "'":
            out.append(rng.choice(["&apos;", "'", "&#39;"]))
        elif ord(ch) > 127 and rng.random() < 0.5:
            out.append(rng.choice(["&#%d;" % ord(ch), "&#x%X;" % ord(ch)]))
        else:
            out.append(ch)
    return "".join(out)


def attr(name, value, rng, allow_bare=False):
    if allow_bare and " " not in value and rng.random() < 0.3:
        return "%s=%s" % (name, value)
    q = rng.choice(["'", '"'])
    return "%s=%s%s%s" % (name, q, value, q)


def title_for(box, rng):
    parts = ["bbox %d %d %d %d" % tuple(box)]
    if rng.random() < 0.5:
        parts.append("x_wconf %d" % rng.randint(50, 99))
    if rng.random() < 0.3:
        parts.insert(0, "baseline 0.01 -3")
    return rng.choice(["; ", ";"]).join(parts)


def styled(text, style, rng):
    if style & 4:
        text = "<u>%s</u>" % text
    if style & 2:
        text = _wrap(rng.choice(["em", "i"]), text)
    if style & 1:
        text = _wrap(rng.choice(["strong", "b"]), text)
    return text


def _wrap(tag, text):
    return "<%s>%s</%s>" % (tag, text, tag)


def make_doc(k):
    rng = random.Random(1000 + k)
    doc_id = "page_%02d" % k
    w, h = rng.randint(300, 2500), rng.randint(300, 3300)
    words_expected = []
    clipped = 0
    body = []
    n_lines = rng.randint(0, 6) if k != 0 else 0
    wid = 0
    for line_no in range(n_lines):
        line_words = []
        for _ in range(rng.randint(1, 5)):
            wid += 1
            text = rng.choice(LEXICON)
            x0 = rng.randint(0, w - 1)
            y0 = rng.randint(0, h - 1)
            x1 = x0 + rng.randint(0, 300)
            y1 = y0 + rng.randint(0, 60)
            box = [x0, y0, x1, y1]
            style = rng.choice([0, 0, 0, 1, 2, 4, 3, 5, 7])
            blank = rng.random() < 0.08
            pad_l = rng.choice(["", " ", "\n    "])
            pad_r = rng.choice(["", " ", "\n"])
            inner = "   " if blank else escape(text, rng)
            inner = styled(inner, style, rng) if not blank else inner
            if rng.random() < 0.15 and not blank:
                inner = inner + "<!-- ocr note -->"
            span = "<span %s %s %s>%s%s%s</span>" % (
                attr("class", "ocrx_word", rng, allow_bare=True), attr("id", "word_%d_%d" % (k, wid), rng),
                attr("title", title_for(box, rng), rng), pad_l, inner, pad_r)
            line_words.append(span)
            if not blank:
                cb = [min(max(box[0], 0), w), min(max(box[1], 0), h), min(max(box[2], 0), w), min(max(box[3], 0), h)]
                if cb != box:
                    clipped += 1
                words_expected.append({"text": text, "box": cb, "style": style})
        line_title = "bbox 0 %d %d %d" % (line_no * 10, w, line_no * 10 + 9)
        line = "<span %s %s>%s</span>" % (attr("class", "ocr_line", rng), attr("title", line_title, rng),
                                          rng.choice([" ", "\n     "]).join(line_words))
        if rng.random() < 0.5:
            line = "<div class='ocr_carea' title='bbox 0 0 %d %d'><p class='ocr_par'>%s</p></div>" % (w, h, line)
        body.append(line)

    head = []
    if rng.random() < 0.7:
        head.append('<?xml version="1.0" encoding="UTF-8"?>')
    if rng.random() < 0.5:
        head.append('<!DOCTYPE html PUBLIC "-//W3C//DTD XHTML 1.0 Transitional//EN" '
                    '"http://www.w3.org/TR/xhtml1/DTD/xhtml1-transitional.dtd">')
    page_title = "image \"scan_%02d.png\"; bbox 0 0 %d %d; ppageno 0" % (k, w, h)
    meta = "<meta name='ocr-system' content='fixture'/>" if rng.random() < 0.5 else "<meta name=ocr-system content=fixture>"
    html = "\n".join(head + [
        "<html>", "<head><title>fixture %d</title>%s</head>" % (k, meta), "<body>",
        "<div class='ocr_page' id='%s' title='%s'>" % (doc_id, page_title.replace("'", "&apos;")),
        "\n".join(body), "</div>", "</body>", "</html>", ""])
    expected = {"doc_id": doc_id, "page": [w, h], "words": words_expected, "clipped": clipped}
    return html, expected


def main():
    OUT.mkdir(exist_ok=True)
    for k in range(50):
        html, expected = make_doc(k)
        (OUT / ("doc_%02d.hocr" % k)).write_text(html, encoding="utf-8", newline="\n")
        (OUT / ("doc_%02d.json" % k)).write_text(json.dumps(expected, ensure_ascii=False, sort_keys=True) + "\n",
                                                 encoding="utf-8", newline="\n")


if __name__ == "__main__":
    main()
