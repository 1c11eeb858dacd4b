"""Built-in valence lexicon used to weight salience by emotional impact."""
from __future__ import annotations

from .embeddings import tokenize

# Hand-assembled word valences in [-1, 1]. Deliberately small: the provider
# interface accepts richer external scorers; this default keeps the suite
# offline and deterministic.
LEXICON: dict[str, float] = {
    # positive
    "admire": 0.5, "adore": 0.7, "amazing": 0.8, "beautiful": 0.7, "best": 0.8,
    "bless": 0.6, "brave": 0.6, "bright": 0.4, "brilliant": 0.8, "calm": 0.3,
    "celebrate": 0.7, "charming": 0.6, "cheer": 0.6, "comfort": 0.5, "delight": 0.8,
    "eager": 0.4, "ecstatic": 0.9, "enjoy": 0.6, "excellent": 0.9, "faith": 0.4,
    "fond": 0.4, "forgive": 0.5, "fortune": 0.5, "free": 0.4, "friend": 0.4,
    "generous": 0.6, "gentle": 0.4, "glad": 0.6, "glorious": 0.8, "good": 0.6,
    "grace": 0.5, "grand": 0.5, "great": 0.7, "happy": 0.7, "heaven": 0.6,
    "honor": 0.5, "hope": 0.5, "joy": 0.8, "kind": 0.5, "laugh": 0.6,
    "love": 0.8, "lovely": 0.7, "lucky": 0.6, "marvelous": 0.8, "merry": 0.6,
    "noble": 0.5, "peace": 0.5, "perfect": 0.8, "pleasant": 0.5, "pleasure": 0.6,
    "proud": 0.5, "rejoice": 0.8, "rescue": 0.5, "safe": 0.4, "smile": 0.5,
    "splendid": 0.7, "succeed": 0.6, "sweet": 0.5, "tender": 0.4, "triumph": 0.8,
    "trust": 0.4, "victory": 0.7, "warm": 0.4, "welcome": 0.4, "wonderful": 0.8,
    # negative
    "abandon": -0.5, "afraid": -0.6, "agony": -0.8, "anger": -0.6, "angry": -0.6,
    "anguish": -0.8, "awful": -0.8, "bad": -0.6, "battle": -0.4, "betray": -0.8,
    "bitter": -0.5, "blood": -0.5, "break": -0.3, "cruel": -0.7, "cry": -0.5,
    "curse": -0.6, "danger": -0.6, "dark": -0.3, "dead": -0.6, "death": -0.6,
    "despair": -0.8, "destroy": -0.7, "die": -0.7, "doom": -0.7, "dread": -0.7,
    "enemy": -0.5, "evil": -0.8, "fail": -0.6, "fear": -0.7, "fight": -0.4,
    "grave": -0.4, "grief": -0.8, "hate": -0.8, "horrible": -0.8, "horror": -0.8,
    "hurt": -0.6, "kill": -0.8, "lonely": -0.6, "lose": -0.4, "loss": -0.5,
    "mad": -0.5, "misery": -0.8, "murder": -0.9, "pain": -0.7, "panic": -0.7,
    "poison": -0.6, "poor": -0.4, "rage": -0.7, "ruin": -0.6, "sad": -0.6,
    "scream": -0.6, "shame": -0.6, "sick": -0.5, "sorrow": -0.7, "storm": -0.3,
    "suffer": -0.7, "terrible": -0.8, "terror": -0.9, "threat": -0.6, "tragic": -0.8,
    "ugly": -0.5, "vicious": -0.7, "war": -0.6, "weep": -0.6, "wicked": -0.7,
    "worst": -0.8, "wound": -0.6, "wrath": -0.7, "wrong": -0.4,
}


class LexiconSentiment:
    """Mean valence of lexicon words in a text, clamped to [-1, 1].

    Texts with no lexicon hits (including empty text) score exactly 0.
    """

    name = "lexicon"

    def __init__(self, lexicon: dict[str, float] | None = None):
        self._lexicon = LEXICON if lexicon is None else lexicon

    def score(self, text: str) -> float:
        values = [self._lexicon[tok] for tok in tokenize(text) if tok in self._lexicon]
        if not values:
            return 0.0
        mean = sum(values) / len(values)
        return max(-1.0, min(1.0, mean))
