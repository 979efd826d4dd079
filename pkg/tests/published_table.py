"""Published per-participant accuracies (10 participants x 5 models) and their printed footer."""

PARTICIPANTS = [f"P{i}" for i in range(1, 11)]

COLUMNS = {
    "psd_svm": [0.6886, 0.6912, 0.6204, 0.7023, 0.7427, 0.7226, 0.5897, 0.7285, 0.7127, 0.6698],
    "deepconvnet": [0.7281, 0.7303, 0.7653, 0.7602, 0.8006, 0.8118, 0.7111, 0.7882, 0.7695, 0.7446],
    "eegnet": [0.7332, 0.7488, 0.7716, 0.7705, 0.8214, 0.8233, 0.7307, 0.7835, 0.7701, 0.7588],
    "mfb_cnn": [0.7641, 0.7732, 0.7972, 0.7951, 0.8629, 0.8602, 0.7652, 0.8129, 0.8024, 0.7831],
    "proposed": [0.8329, 0.8657, 0.8604, 0.8521, 0.8611, 0.9214, 0.8438, 0.8722, 0.8816, 0.8215],
}

FOOTER = {  # (Avg., Std.) as printed, 4 decimals
    "psd_svm": (0.6869, 0.0485),
    "deepconvnet": (0.7610, 0.0329),
    "eegnet": (0.7712, 0.0318),
    "mfb_cnn": (0.8016, 0.0354),
    "proposed": (0.8613, 0.0278),
}


def as_cells():
    return {(p, m): [v] for m, col in COLUMNS.items() for p, v in zip(PARTICIPANTS, col)}
