"""Regenerates tests/data/porter_vocabulary.tsv.

Reference stems come from NLTK's PorterStemmer in ORIGINAL_ALGORITHM mode,
which follows the rule set as originally published. The word list is a
deterministic sample of the GCIDE dictionary (english-words package) plus
every lowercase alphabetic word appearing in the example titles below.
The third column is the reference stem of the stem; it differs from the
stem for the words on which Porter's algorithm is not idempotent.

    pip install nltk english-words
    python3 tests/oracles/gen_porter_vocabulary.py > tests/data/porter_vocabulary.tsv
"""
import re

from english_words import get_english_words_set
from nltk.stem.porter import PorterStemmer

EXTRA = """
caresses ponies ties caress cats feed agreed plastered bled motoring sing
conflated troubled sized hopping tanned falling hissing fizzed failing filing
happy sky relational conditional rational valenci hesitanci digitizer
conformabli radicalli differentli vileli analogousli vietnamization
predication operator feudalism decisiveness hopefulness callousness formaliti
sensitiviti sensibiliti triplicate formative formalize electriciti electrical
hopeful goodness revival allowance inference airliner gyroscopic adjustable
defensible irritant replacement adjustment dependent adoption homologou
communism activate angulariti homologous effective bowdlerize probate rate
cease controll roll generalizations oscillators recalls recall undeclared
allergens salmonella listeria monocytogenes contamination possible products
sausage turkey peanut milk sulphites contains packaging defect foreign bodies
"""


def main():
    stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    words = sorted(get_english_words_set(["gcide"], lower=True, alpha=True))
    sample = set(words[::4])
    sample.update(w for w in re.findall(r"[a-z]+", EXTRA))
    for word in sorted(sample):
        stem = stemmer.stem(word)
        print(f"{word}\t{stem}\t{stemmer.stem(stem)}")


if __name__ == "__main__":
    main()
