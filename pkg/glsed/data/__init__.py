from glsed.data.minibatch import MinibatchPlan, TrainingSet, ValidationSet
