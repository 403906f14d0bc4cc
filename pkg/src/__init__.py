# Continuation MLMC engine source package
