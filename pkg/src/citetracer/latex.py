"""LaTeX-to-Unicode conversion for BibTeX field values."""

from __future__ import annotations

import re
import unicodedata

# accent macro -> combining character
_ACCENTS = {
    "'": "\u0301",
    "`": "\u0300",
    "^": "\u0302",
    '"': "\u0308",
    "~": "\u0303",
    "=": "\u0304",
    ".": "\u0307",
    "u": "\u0306",
    "v": "\u030c",
    "H": "\u030b",
    "c": "\u0327",
    "k": "\u0328",
    "r": "\u030a",
    "d": "\u0323",
    "b": "\u0331",
    "t": "\u0361",
}

_SYMBOLS = {
    "ss": "ß",
    "o": "ø",
    "O": "Ø",
    "ae": "æ",
    "AE": "Æ",
    "oe": "œ",
    "OE": "Œ",
    "aa": "å",
    "AA": "Å",
    "l": "ł",
    "L": "Ł",
    "i": "ı",
    "j": "ȷ",
    "dh": "ð",
    "DH": "Ð",
    "th": "þ",
    "TH": "Þ",
    "textendash": "–",
    "textemdash": "—",
    "textquoteright": "’",
    "textquoteleft": "‘",
    "ldots": "…",
    "dots": "…",
    "textasciitilde": "~",
    "textbackslash": "\\",
    "S": "§",
    "P": "¶",
    "copyright": "©",
    "pounds": "£",
}

_ESCAPES = {"&": "&", "%": "%", "_": "_", "$": "$", "#": "#", "{": "{", "}": "}", " ": " ", ",": " "}

_ACCENT_RE = re.compile(
    r"""\\([`'^"~=.])\s*(?:\{\s*(\\?[A-Za-z])\s*\}|(\\?[A-Za-z]))"""
    r"""|\\([uvHckrdbt])(?:\s*\{\s*(\\?[A-Za-z])\s*\}|\s+(\\?[A-Za-z]))"""
)
_SYMBOL_RE = re.compile(r"\\([A-Za-z]+)(?![A-Za-z])\s?(?:\{\})?")
_ESCAPE_RE = re.compile(r"\\([&%_$#{} ,])")


def _accent(match: re.Match) -> str:
    if match.group(1):
        macro, base = match.group(1), match.group(2) or match.group(3)
    else:
        macro, base = match.group(4), match.group(5) or match.group(6)
    if base.startswith("\\"):
        base = _SYMBOLS.get(base[1:], base[1:])
    return unicodedata.normalize("NFC", base + _ACCENTS[macro])


def _symbol(match: re.Match) -> str:
    name = match.group(1)
    if name in _SYMBOLS:
        return _SYMBOLS[name]
    # unknown macro: drop the control word, keep any argument text
    return ""


def latex_to_unicode(text: str) -> str:
    """Decode common LaTeX accents and symbols, then strip grouping braces.

    Unknown macros degrade to their brace-stripped arguments.
    """
    if "\\" not in text and "{" not in text and "-" not in text and "~" not in text and "`" not in text:
        return " ".join(text.split())
    text = _ACCENT_RE.sub(_accent, text)
    text = _ESCAPE_RE.sub(lambda m: "\x00" + m.group(1) + "\x00", text)
    text = _SYMBOL_RE.sub(_symbol, text)
    text = text.replace("---", "—").replace("--", "–")
    text = text.replace("``", "“").replace("''", "”")
    text = re.sub(r"(?<!\x00)~(?!\x00)", " ", text)
    text = re.sub(r"(?<!\x00)[{}](?!\x00)", "", text)
    text = re.sub(r"\x00(.)\x00", lambda m: _ESCAPES[m.group(1)], text)
    return " ".join(text.split())


_SPECIAL = {"&": r"\&", "%": r"\%", "#": r"\#", "_": r"\_", "$": r"\$", "{": r"\{", "}": r"\}"}


def unicode_to_latex(text: str) -> str:
    """Escape characters that would otherwise be read as LaTeX syntax.

    Non-ASCII characters are written as-is (the files are UTF-8).
    """
    out = []
    for ch in text:
        if ch in _SPECIAL:
            out.append(_SPECIAL[ch])
        elif ch == "\\":
            out.append(r"\textbackslash{}")
        elif ch == "~":
            out.append(r"\textasciitilde{}")
        else:
            out.append(ch)
    text = "".join(out)
    # keep dash runs and quote pairs from being re-read as ligatures
    text = re.sub(r"-(?=-)", "-{}", text)
    text = text.replace("``", "`{}`").replace("''", "'{}'")
    return text
