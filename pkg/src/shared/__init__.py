# Shared models, errors, logging and metrics for the MLMC engine
