"""Bias-corrected Adam.

Parameter data is replaced, not mutated in place: forward graphs hold
references to the arrays they were built from, so an in-place update
would silently corrupt any backward pass that runs after a step (the
GAN loop backprops the generator through a discriminator that has
already been stepped).
"""

import numpy as np


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        if lr < 0:
            raise ValueError("lr must be >= 0")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ValueError("adam step with missing gradient; run backward first")
            g = p.grad
            if p.adam_m is None:
                p.adam_m = np.zeros_like(p.data)
                p.adam_v = np.zeros_like(p.data)
            p.adam_step += 1
            t = p.adam_step
            p.adam_m = self.beta1 * p.adam_m + (1 - self.beta1) * g
            p.adam_v = self.beta2 * p.adam_v + (1 - self.beta2) * g * g
            mhat = p.adam_m / (1 - self.beta1 ** t)
            vhat = p.adam_v / (1 - self.beta2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
