"""Regenerate the packaged data files: default color model and lexicon.

The color model is fitted with EM on samples drawn from hand-picked
per-class reference palettes (paper tones, inks, carmine built-up
areas, greens, blues, road ochres). The lexicon is a syllable
combinator producing 500 plausible place names. Both outputs are
deterministic; run from the repository root:

    python scripts/build_bundled_data.py
"""

from pathlib import Path
import sys

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mapseg.colors import fit_color_model  # noqa: E402

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "mapseg" / "data"

PALETTES = {
    0: [(238, 232, 213), (228, 218, 190), (245, 240, 228), (230, 228, 222)],
    1: [(60, 50, 45), (80, 48, 44), (48, 48, 62)],
    2: [(180, 80, 70), (150, 90, 70), (122, 62, 52), (95, 82, 76)],
    3: [(150, 180, 120), (120, 160, 100), (200, 190, 150), (172, 172, 122)],
    4: [(110, 150, 190), (82, 128, 185), (148, 178, 200), (55, 90, 195)],
    5: [(200, 170, 120), (180, 140, 90), (222, 205, 170), (162, 102, 72)],
}

PREFIXES = ["San", "Villa", "Port", "Fort", "New", "Saint", "Bad", "Ober", "Neder", "Kirk",
            "Stor", "Val", "Mont", "Castel", "Pont", "Bran", "Wester", "Oster", "Lang", "Hoch"]
STEMS = ["ar", "bel", "cor", "dal", "es", "fontan", "gram", "hav", "ing", "jor",
         "kal", "lum", "mar", "nor", "ol", "pra", "quil", "ros", "sel", "tur",
         "um", "ver", "wil", "xan", "yer", "zell"]
SUFFIXES = ["berg", "bourg", "by", "dale", "feld", "ford", "grad", "ham", "holm", "ia",
            "kirch", "mont", "ovo", "polis", "stad", "ton", "ville", "wick", "za", "heim"]


def build_lexicon(n: int = 500, seed: int = 20260810) -> list[str]:
    rng = np.random.default_rng(seed)
    names: list[str] = []
    seen = set()
    while len(names) < n:
        parts = []
        if rng.random() < 0.35:
            parts.append(PREFIXES[int(rng.integers(len(PREFIXES)))] + " ")
        stem = STEMS[int(rng.integers(len(STEMS)))]
        if rng.random() < 0.45:
            stem += STEMS[int(rng.integers(len(STEMS)))]
        name = "".join(parts) + stem.capitalize() + SUFFIXES[int(rng.integers(len(SUFFIXES)))]
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def build_color_model():
    rng = np.random.default_rng(4242)
    pixels = {}
    for cls, anchors in PALETTES.items():
        chunks = []
        for anchor in anchors:
            chunks.append(rng.normal(loc=anchor, scale=12.0, size=(400, 3)))
        pixels[cls] = np.clip(np.concatenate(chunks), 0, 255)
    return fit_color_model(pixels, components=3, max_iter=200, tol=1e-8, seed=7)


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    model = build_color_model()
    model.save(DATA_DIR / "default_colors.json")
    lex = build_lexicon()
    (DATA_DIR / "lexicon.txt").write_text("\n".join(lex) + "\n", encoding="utf-8")
    print(f"wrote {DATA_DIR / 'default_colors.json'} ({len(model.classes())} classes)")
    print(f"wrote {DATA_DIR / 'lexicon.txt'} ({len(lex)} names)")


if __name__ == "__main__":
    main()
