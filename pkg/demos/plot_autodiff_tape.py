"""
Reverse-mode gradients on a tape
================================

A tiny regression fitted with the tape and Adam, then a finite-difference
check of the recorded gradients.
"""

import numpy as np

from aem.autodiff import ParameterStore, Tape, adam_step, cosine_lr

rng = np.random.default_rng(0)
x = rng.standard_normal((200, 3))
y = np.tanh(x @ np.array([[1.0], [-2.0], [0.5]]))

store = ParameterStore()
store.add("w1", 0.3 * rng.standard_normal((16, 3)))
store.add("b1", np.zeros(16))
store.add("w2", 0.3 * rng.standard_normal((1, 16)))


def loss_node(tape):
    h = tape.tanh(tape.affine(tape.constant(x), tape.param("w1"), tape.param("b1")))
    err = tape.sub(tape.affine(h, tape.param("w2")), tape.constant(y))
    return tape.mean(tape.square(err))


###############################################################################
# Train for a few hundred Adam steps under the cosine schedule.

steps = 400
for step in range(steps):
    store.zero_grad()
    tape = Tape(store)
    loss = loss_node(tape)
    tape.backward(loss)
    adam_step(store, cosine_lr(step, steps, 1e-2))
    if step % 100 == 0:
        print(f"step {step:4d}  mse {loss.value:.5f}")

###############################################################################
# Central differences agree with the tape to about 1e-9.

store.zero_grad()
tape = Tape(store)
tape.backward(loss_node(tape))
w = store["w1"]
i, j, h = 4, 1, 1e-6
w[i, j] += h
up = loss_node(Tape(store)).value
w[i, j] -= 2 * h
down = loss_node(Tape(store)).value
w[i, j] += h
print("analytic", store.grad("w1")[i, j], "numeric", (up - down) / (2 * h))
