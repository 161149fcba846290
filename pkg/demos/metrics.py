"""The four evaluation metrics on a tiny hand-made example, ties included."""

import numpy as np

from accessmfs import average_precision, macro_f1, one_error, ranking_loss

scores = np.array([[0.9, 0.5, 0.5, 0.1],
                   [0.2, 0.8, 0.8, 0.4]])
truth = np.array([[1, 0, 1, 0],
                  [0, 1, 0, 0]])
preds = (scores >= 0.5).astype(int)

print("AP ", average_precision(scores, truth))
print("RL ", ranking_loss(scores, truth))
print("OE ", one_error(scores, truth))
print("MaF", macro_f1(preds, truth))
