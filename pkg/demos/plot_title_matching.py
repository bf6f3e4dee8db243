"""
Fuzzy title matching
====================

Replies rarely copy catalog titles exactly. Titles are compared after
casefolding and whitespace collapsing, using the unrestricted
Damerau-Levenshtein distance normalised by the longer title.
"""

from zsrec.dataset import ItemCatalog
from zsrec.llm import damerau_levenshtein, match_title, parse_recommendations, title_similarity

catalog = ItemCatalog({"1": "Mad Max: Fury Road (2015)", "2": "The Matrix (1999)",
                       "3": "Toy Story (1995)"}, {})

###############################################################################
# One transposition costs a single edit.
print(damerau_levenshtein("Mad Max", "Mda Max"))
print(round(title_similarity("Mad Max: Fury Road (2015)", "Mad Max: Fury Raod (2015)"), 4))

###############################################################################
# Numbering, bullets and quotes are stripped before matching.
reply = """Here you go:
1. "The Matrix" (1999)
2. toy  story (1995)
3. A Film That Does Not Exist
"""
for title in parse_recommendations(reply):
    print(f"{title!r:35} -> {match_title(title, catalog)}")
