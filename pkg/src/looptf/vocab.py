"""Global token table shared by every task, model and file format.

Value tokens use their integer value as id (0 and 1 are binary digits,
2..51 extend the alphabet for the unique-set task), so RASP-L programs can
compute directly on token ids.
"""

N_VALUES = 52

PLUS = 52
TIMES = 53
EOQ = 54
EOS = 55
IGNORE = 56
PAUSE = 57

VOCAB_SIZE = 58

SPECIAL_GLYPHS = {PLUS: "+", TIMES: "×", EOQ: ">", EOS: "#", IGNORE: "*", PAUSE: "."}
_GLYPH_TO_ID = {g: i for i, g in SPECIAL_GLYPHS.items()}
_GLYPH_TO_ID["x"] = TIMES  # ascii fallback


def glyph(token: int) -> str:
    if 0 <= token < N_VALUES:
        return str(token)
    try:
        return SPECIAL_GLYPHS[token]
    except KeyError:
        raise ValueError(f"unknown token id {token}") from None


def encode(text: str) -> list[int]:
    """Parse a space separated glyph string such as ``"1 0 + 1 1 > # #"``."""
    out = []
    for g in text.split():
        if g in _GLYPH_TO_ID:
            out.append(_GLYPH_TO_ID[g])
        elif g.isdigit() and int(g) < N_VALUES:
            out.append(int(g))
        else:
            raise ValueError(f"unknown glyph {g!r}")
    return out


def decode(tokens) -> str:
    return " ".join(glyph(int(t)) for t in tokens)


def table() -> dict[int, str]:
    """id -> glyph mapping, serialized alongside configs and checkpoints."""
    return {i: glyph(i) for i in range(VOCAB_SIZE)}
