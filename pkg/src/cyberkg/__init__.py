"""Knowledge mining for cyber-incident reports.

Turns unstructured incident reports into a five-kind knowledge graph
(entity, country, industry, product, attacker), scores central nodes with
a decaying-exponential attack history, derives four-variable entity risk
vectors from the graph and its central-node projection, and evaluates the
result with PCA and logistic regression.
"""

__version__ = "0.1.0"
