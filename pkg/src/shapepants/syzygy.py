"""Signed syzygy words: stutter reduction, decoration and classification.

A word is stored as a tuple of letters in ``{1, 2, 3}`` plus the sign of
its first letter (``None`` for unsigned words).  Signs always alternate, so
every other sign is derived.  Periodic words are cyclic; their normal form
is unique up to rotation, see :func:`canonical_rotation`.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import NoValidShift, OddPeriodicLength

_SIGN_CHARS = {"+": "+", "-": "-", "−": "-", "⁺": "+", "⁻": "-"}


def _flip(sign: str | None) -> str | None:
    if sign is None:
        return None
    return "-" if sign == "+" else "+"


@dataclass(frozen=True)
class SignedWord:
    letters: tuple[int, ...]
    sign0: str | None = None
    periodic: bool = False

    def __post_init__(self) -> None:
        if any(a not in (1, 2, 3) for a in self.letters):
            raise ValueError(f"letters must be 1, 2 or 3: {self.letters!r}")
        if self.sign0 not in (None, "+", "-"):
            raise ValueError(f"bad sign {self.sign0!r}")
        if self.periodic and self.sign0 is not None and len(self.letters) % 2:
            raise OddPeriodicLength("a signed periodic word needs even length")

    @classmethod
    def parse(cls, text: str, periodic: bool = False) -> "SignedWord":
        """Parse ``"1+2-3+"`` (signed) or ``"123"`` (unsigned)."""
        letters: list[int] = []
        signs: list[str] = []
        for ch in text.strip():
            if ch in "123":
                letters.append(int(ch))
            elif ch in _SIGN_CHARS:
                if len(signs) != len(letters) - 1:
                    raise ValueError(f"sign without letter in {text!r}")
                signs.append(_SIGN_CHARS[ch])
            elif ch.isspace() or ch in ",":
                continue
            else:
                raise ValueError(f"unexpected character {ch!r} in {text!r}")
        if signs and len(signs) != len(letters):
            raise ValueError(f"every letter needs a sign in {text!r}")
        sign0 = signs[0] if signs else None
        word = cls(tuple(letters), sign0, periodic)
        if signs and list(word.signs) != signs:
            raise ValueError(f"signs must alternate in {text!r}")
        return word

    @property
    def signs(self) -> tuple[str, ...]:
        if self.sign0 is None:
            return ()
        other = _flip(self.sign0)
        return tuple(self.sign0 if i % 2 == 0 else other for i in range(len(self.letters)))

    @property
    def signed(self) -> bool:
        return self.sign0 is not None

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        if self.sign0 is None:
            return "".join(str(a) for a in self.letters)
        return "".join(f"{a}{s}" for a, s in zip(self.letters, self.signs))

    def unsigned(self) -> "SignedWord":
        return SignedWord(self.letters, None, self.periodic)

    def rotate(self, k: int) -> "SignedWord":
        """Cyclic shift so that letter ``k`` comes first."""
        if not self.letters:
            return self
        k %= len(self.letters)
        sign0 = self.sign0 if k % 2 == 0 else _flip(self.sign0)
        return SignedWord(self.letters[k:] + self.letters[:k], sign0, self.periodic)

    def relabel(self, shift: int = 1) -> "SignedWord":
        """Apply the letter rotation ``1 -> 2 -> 3 -> 1`` ``shift`` times."""
        return SignedWord(tuple((a - 1 + shift) % 3 + 1 for a in self.letters), self.sign0, self.periodic)

    def letter_set(self) -> frozenset[int]:
        return frozenset(self.letters)


@dataclass(frozen=True)
class WordClass:
    stutter_free: bool
    tied: bool
    collision_forward: bool = False
    collision_backward: bool = False


def has_stutter(letters, periodic: bool = False) -> bool:
    letters = tuple(letters)
    if any(a == b for a, b in zip(letters, letters[1:])):
        return True
    if periodic and letters and (len(letters) == 1 or letters[0] == letters[-1]):
        return True
    return False


def reduce_stutters(w: SignedWord) -> SignedWord:
    """Delete adjacent equal pairs (cyclically if periodic) until none remain."""
    stack: list[int] = []
    for a in w.letters:
        if stack and stack[-1] == a:
            stack.pop()
        else:
            stack.append(a)
    # linear deletions remove an even-length block, so sign0 is unchanged
    sign0 = w.sign0
    if w.periodic:
        lo, hi = 0, len(stack)
        while hi - lo >= 2 and stack[lo] == stack[hi - 1]:
            lo += 1
            hi -= 1
            sign0 = _flip(sign0)
        stack = stack[lo:hi]
        if len(stack) == 1:
            # a lone periodic letter is the stutter ...aaa...
            stack = []
    if not stack:
        sign0 = w.sign0
    return SignedWord(tuple(stack), sign0, w.periodic)


def canonical_rotation(w: SignedWord) -> SignedWord:
    """Lexicographically smallest rotation (sign included) of a periodic word."""
    if not w.periodic or not w.letters:
        return w
    rots = [w.rotate(k) for k in range(len(w.letters))]
    return min(rots, key=lambda r: (r.letters, r.sign0 or ""))


def same_cyclic_word(a: SignedWord, b: SignedWord) -> bool:
    if len(a) != len(b):
        return False
    if not a.letters:
        return True
    return any(a.rotate(k) == b for k in range(len(a)))


def sign_decorations(letters, periodic: bool = False) -> tuple[SignedWord, SignedWord]:
    """The two alternating sign decorations, starting with ``+`` and ``-``."""
    if isinstance(letters, SignedWord):
        periodic = letters.periodic
        letters = letters.letters
    elif isinstance(letters, str):
        letters = SignedWord.parse(letters).letters
    letters = tuple(letters)
    if has_stutter(letters, periodic):
        raise ValueError("sign decorations need a stutter-free word")
    if periodic and len(letters) % 2:
        raise OddPeriodicLength(f"periodic word of odd length {len(letters)}; double it first")
    return SignedWord(letters, "+", periodic), SignedWord(letters, "-", periodic)


def _two_letter_tail(tail: tuple[int, ...]) -> bool:
    return bool(tail) and not has_stutter(tail, periodic=True) and len(set(tail)) == 2


@dataclass(frozen=True)
class BiInfiniteWord:
    """``...bbb core fff...`` with periodic tails ``backward`` and ``forward``.

    Index 0 is the first core letter (or the first forward letter if the
    core is empty); ``sign0`` is the sign at index 0.
    """

    backward: tuple[int, ...]
    core: tuple[int, ...]
    forward: tuple[int, ...]
    sign0: str | None = None

    def __post_init__(self) -> None:
        if not self.backward or not self.forward:
            raise ValueError("both tails need a nonempty generator")

    @classmethod
    def periodic(cls, w: SignedWord | str) -> "BiInfiniteWord":
        if isinstance(w, str):
            w = SignedWord.parse(w, periodic=True)
        return cls(w.letters, (), w.letters, w.sign0)

    @classmethod
    def parse(cls, text: str) -> "BiInfiniteWord":
        """``"(12)3(123)"`` means backward tail 12, core 3, forward tail 123."""
        import re

        match = re.fullmatch(r"\s*\(([^)]*)\)([^()]*)\(([^)]*)\)\s*", text)
        if not match:
            raise ValueError(f"expected '(back)core(forward)', got {text!r}")
        back, core, fwd = (SignedWord.parse(part) for part in match.groups())
        return cls(back.letters, core.letters, fwd.letters, core.sign0 or fwd.sign0)

    def letter(self, i: int) -> int:
        nc = len(self.core)
        if i < 0:
            return self.backward[i % len(self.backward)]
        if i < nc:
            return self.core[i]
        return self.forward[(i - nc) % len(self.forward)]

    def window(self, start: int, length: int) -> tuple[int, ...]:
        return tuple(self.letter(i) for i in range(start, start + length))

    def sign_at(self, i: int) -> str | None:
        return self.sign0 if i % 2 == 0 else _flip(self.sign0)

    def stutter_free(self) -> bool:
        span = self.window(-2 * len(self.backward), 2 * len(self.backward) + len(self.core)
                           + 2 * len(self.forward))
        return not (has_stutter(span) or has_stutter(self.backward, True) or has_stutter(self.forward, True))

    def letter_set(self) -> frozenset[int]:
        return frozenset(self.backward + self.core + self.forward)


def classify(w: SignedWord | BiInfiniteWord) -> WordClass:
    """Stutter, tied and collision flags.

    A word is untied when its reduced form uses at most two letters.  The
    collision flags of a bi-infinite word test whether the forward or
    backward tail is a two-letter alternation; the tails of a periodic word
    are the word itself.
    """
    if isinstance(w, BiInfiniteWord):
        return WordClass(
            stutter_free=w.stutter_free(),
            tied=len(w.letter_set()) == 3,
            collision_forward=_two_letter_tail(w.forward),
            collision_backward=_two_letter_tail(w.backward),
        )
    reduced = reduce_stutters(w)
    tied = len(reduced.letter_set()) == 3
    tails = w.periodic and _two_letter_tail(reduced.letters)
    return WordClass(
        stutter_free=not has_stutter(w.letters, w.periodic),
        tied=tied,
        collision_forward=tails,
        collision_backward=tails,
    )


def periodic_approximants(s: BiInfiniteWord | SignedWord, N: int) -> SignedWord:
    """Window ``s_{-N+1} .. s_N`` repeated periodically, shifted to avoid a join stutter."""
    if isinstance(s, SignedWord):
        s = BiInfiniteWord.periodic(s)
    if N < 1:
        raise ValueError("N must be positive")
    limit = 2 * N + len(s.backward) + len(s.core) + len(s.forward)
    for j in range(limit):
        start = -N + 1 + j
        letters = s.window(start, 2 * N)
        if not has_stutter(letters, periodic=True):
            return SignedWord(letters, s.sign_at(start), periodic=True)
    raise NoValidShift(f"no stutter-free window of length {2 * N}")


__all__ = [
    "BiInfiniteWord", "SignedWord", "WordClass", "canonical_rotation", "classify", "has_stutter",
    "periodic_approximants", "reduce_stutters", "same_cyclic_word", "sign_decorations",
]
